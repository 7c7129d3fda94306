use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde_json::{json, Value};

use sdsem_core::data::{load_panel, parse_panel, write_adjacency_csv, write_panel_csv, PanelDataset, PanelSchema, Period, RunConfig};
use sdsem_core::ecm::{rank_posterior, RANK_NAMES};
use sdsem_core::forecast::{forecast_conditional, forecast_metrics, forecast_unconditional, ForecastOptions};
use sdsem_core::io::{load_chains, save_chain, write_atomic, write_json, ChainFileMeta};
use sdsem_core::mcmc::{chain_rng, convergence_table, run_chains, select_anchor_states, ModelSpec, PosteriorDraws, SweepData};
use sdsem_core::multipliers::multiplier_posterior;
use sdsem_core::selection::{grid_search, write_grid_csv, GridInput};
use sdsem_core::synthetic::{desk_truth, simulate_panel};
use sdsem_core::{Error, Result};

/// Bayesian spatial dynamic factor models for lattice panels.
#[derive(Parser)]
#[command(name = "sdsem", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Long panel CSV: site,period,variable,value[,region].
    #[arg(long)]
    data: PathBuf,
    /// Adjacency edge list (site_a,site_b) or square matrix.
    #[arg(long)]
    adjacency: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sampler and write one draw file per chain.
    Fit {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predictive distribution of Y beyond the estimation sample.
    Forecast {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        /// Directory written by `fit`.
        #[arg(long)]
        draws: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Condition on a future path of X.
        #[arg(long, requires = "future_x")]
        conditional: bool,
        /// Long CSV holding X for the forecast periods.
        #[arg(long)]
        future_x: Option<PathBuf>,
        /// Accuracy against the held-out periods, as JSON.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Posterior dynamic multipliers.
    Irf {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        draws: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Synthetic panel from the 3×3 reference system.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 300)]
        periods: usize,
    },
    /// Posterior cointegration-rank frequencies.
    Ranks {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        draws: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// PMCC over the configured (m, l) grid.
    Select {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Gelman–Rubin statistics across chain files.
    Diagnose {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        draws: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Fit { .. } => "fit",
            Command::Forecast { .. } => "forecast",
            Command::Irf { .. } => "irf",
            Command::Simulate { .. } => "simulate",
            Command::Ranks { .. } => "ranks",
            Command::Select { .. } => "select",
            Command::Diagnose { .. } => "diagnose",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Fit { common, .. }
            | Command::Forecast { common, .. }
            | Command::Irf { common, .. }
            | Command::Simulate { common, .. }
            | Command::Ranks { common, .. }
            | Command::Select { common, .. }
            | Command::Diagnose { common, .. } => common,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.command.name();
    let outcome = RunConfig::load(&cli.command.common().config).and_then(|cfg| {
        println!("{}", json!({"command": name, "seed": cfg.seed, "config_hash": cfg.hash()}));
        dispatch(&cli.command, &cfg)
    });
    match outcome {
        Ok(summary) => {
            println!("{}", json!({"command": name, "status": "ok", "result": summary}));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({"command": name, "status": "error", "error": e.kind(), "message": e.to_string()}));
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: &Command, cfg: &RunConfig) -> Result<Value> {
    match cmd {
        Command::Fit { data, out, .. } => fit(cfg, data, out),
        Command::Forecast { data, draws, out, conditional, future_x, metrics, .. } => {
            forecast(cfg, data, draws, out, conditional.then_some(future_x.as_deref()).flatten(), metrics.as_deref())
        }
        Command::Irf { draws, out, .. } => irf(cfg, draws, out),
        Command::Simulate { out, periods, .. } => simulate(cfg, out, *periods),
        Command::Ranks { draws, out, .. } => ranks(cfg, draws, out),
        Command::Select { data, out, .. } => select(cfg, data, out),
        Command::Diagnose { draws, out, .. } => diagnose(draws, out),
    }
}

/// Panel after the configured transforms, split at the holdout.
fn prepared_panel(cfg: &RunConfig, data: &DataArgs) -> Result<(PanelDataset, PanelDataset, DMatrix<f64>)> {
    let mut panel = load_panel(&data.data, &data.adjacency, &cfg.schema())?;
    panel.apply_transforms(&cfg.log_variables, &cfg.deflate_variables)?;
    let (train, held_y, _) = panel.split_holdout(cfg.holdout)?;
    Ok((panel, train, held_y))
}

fn site_rows(panel: &PanelDataset, ids: &[String], n_vars: usize) -> Result<Vec<usize>> {
    ids.iter()
        .map(|id| {
            panel
                .sites
                .iter()
                .position(|s| s == id)
                .map(|s| s * n_vars)
                .ok_or_else(|| Error::InvalidConfig(format!("anchor site {id} not in panel")))
        })
        .collect()
}

fn fit(cfg: &RunConfig, data: &DataArgs, out: &Path) -> Result<Value> {
    let (_, train, _) = prepared_panel(cfg, data)?;
    let n = train.n_sites();
    let (ny, nx) = (cfg.y_variables.len(), cfg.x_variables.len());
    let mut spec = ModelSpec::new(n, ny, nx, cfg.m, cfg.l, cfg.order);
    spec.state_noise = cfg.state_noise;
    let (auto_y, auto_x) = select_anchor_states(&train.y, &train.x, n, cfg.m, cfg.l, train.regions.as_deref(), cfg.seed)?;
    spec.anchors_y = match &cfg.anchors_y {
        Some(ids) => site_rows(&train, ids, ny)?,
        None => auto_y,
    };
    spec.anchors_x = match &cfg.anchors_x {
        Some(ids) => site_rows(&train, ids, nx)?,
        None => auto_x,
    };
    spec.validate()?;
    let sweep = SweepData { y: &train.y, x: &train.x, adjacency: &train.adjacency, spec: &spec, prior: &cfg.prior };
    let (ssvs, chains) = run_chains(&sweep, &cfg.chain_config())?;
    for c in &chains {
        let meta = ChainFileMeta { chain: c.meta.clone(), spec: spec.clone(), ssvs: ssvs.clone(), config_hash: cfg.hash(), grid: None };
        save_chain(out, c, &meta)?;
    }
    let anchors = |rows: &[usize], nv: usize| -> Vec<&str> { rows.iter().map(|r| train.sites[r / nv].as_str()).collect() };
    Ok(json!({
        "out": out,
        "chains": chains.len(),
        "retained_per_chain": chains.first().map_or(0, PosteriorDraws::len),
        "periods": train.n_periods(),
        "anchors_y": anchors(&spec.anchors_y, ny),
        "anchors_x": anchors(&spec.anchors_x, nx),
    }))
}

fn chains_in(dir: &Path) -> Result<(Vec<PosteriorDraws>, ChainFileMeta)> {
    let loaded = load_chains(dir)?;
    let meta = loaded[0].1.clone();
    Ok((loaded.into_iter().map(|(d, _)| d).collect(), meta))
}

/// `X` for the `horizon` periods after `start`, in model units.
fn future_x(cfg: &RunConfig, path: &Path, panel: &PanelDataset, start: Period) -> Result<DMatrix<f64>> {
    let deflated_x = cfg.deflate_variables.iter().any(|v| cfg.x_variables.contains(v));
    let schema = PanelSchema { y_variables: vec![], x_variables: cfg.x_variables.clone(), deflator: if deflated_x { cfg.deflator.clone() } else { None } };
    let mut fx = parse_panel(&std::fs::read_to_string(path)?, &schema)?;
    if fx.sites != panel.sites {
        return Err(Error::AlignmentMismatch("future X sites differ from the panel".into()));
    }
    let logs: Vec<String> = cfg.log_variables.iter().filter(|v| cfg.x_variables.contains(v)).cloned().collect();
    let defl: Vec<String> = cfg.deflate_variables.iter().filter(|v| cfg.x_variables.contains(v)).cloned().collect();
    fx.apply_transforms(&logs, &defl)?;
    let first = fx
        .periods
        .iter()
        .position(|p| *p == start)
        .ok_or_else(|| Error::AlignmentMismatch(format!("future X does not contain {start}")))?;
    if first + cfg.horizon > fx.n_periods() {
        return Err(Error::AlignmentMismatch(format!("future X covers fewer than {} periods from {start}", cfg.horizon)));
    }
    Ok(fx.x.rows(first, cfg.horizon).into_owned())
}

fn forecast(cfg: &RunConfig, data: &DataArgs, draws: &Path, out: &Path, conditional: Option<&Path>, metrics: Option<&Path>) -> Result<Value> {
    let (panel, train, held_y) = prepared_panel(cfg, data)?;
    let (chains, _) = chains_in(draws)?;
    let opts = ForecastOptions { horizon: cfg.horizon, replicates: cfg.forecast_replicates, level: cfg.level, deterministic: false };
    let mut rng = chain_rng(cfg.seed, u64::MAX - 1);
    let last = *train.periods.last().ok_or(Error::EmptyChain)?;
    let result = match conditional {
        Some(path) => forecast_conditional(&chains, &future_x(cfg, path, &panel, last.next())?, &opts, &mut rng)?,
        None => forecast_unconditional(&chains, &opts, &mut rng)?,
    };
    result.write_csv(out)?;
    let mut summary = json!({
        "out": out,
        "mode": if conditional.is_some() { "conditional" } else { "unconditional" },
        "draws": result.n_draws(),
        "explosive": result.n_explosive,
        "rank_deficient": result.n_rank_deficient,
    });
    if let Some(mpath) = metrics {
        if held_y.nrows() < cfg.horizon {
            return Err(Error::InvalidConfig(format!("metrics need holdout >= horizon ({} < {})", held_y.nrows(), cfg.horizon)));
        }
        let truth = held_y.rows(0, cfg.horizon).into_owned();
        let logged = cfg.y_variables.iter().any(|v| cfg.log_variables.contains(v));
        let m = forecast_metrics(&result, &truth, logged)?;
        write_json(mpath, &m)?;
        summary["metrics"] = serde_json::to_value(&m)?;
    }
    Ok(summary)
}

fn irf(cfg: &RunConfig, draws: &Path, out: &Path) -> Result<Value> {
    let (chains, meta) = chains_in(draws)?;
    let series = multiplier_posterior(&chains, cfg.irf_horizon)?;
    series.write_csv(out, meta.spec.n_y_vars, meta.spec.n_x_vars)?;
    Ok(json!({"out": out, "horizon": series.horizon, "draws": series.n_draws}))
}

fn site_ids(n: usize) -> Vec<String> {
    let width = n.saturating_sub(1).to_string().len();
    (0..n).map(|i| format!("s{i:0width$}")).collect()
}

fn simulate(cfg: &RunConfig, out: &Path, periods: usize) -> Result<Value> {
    let mut rng = chain_rng(cfg.seed, u64::MAX - 2);
    let truth = desk_truth(&mut rng)?;
    let sim = simulate_panel(&truth.params, periods, &mut rng)?;
    let adjacency = truth.adjacency()?;
    let sites = site_ids(truth.spec.n_sites);
    let mut p = Period::new(2000, 1)?;
    let mut index = Vec::with_capacity(periods);
    for _ in 0..periods {
        index.push(p);
        p = p.next();
    }
    let panel = PanelDataset::from_matrices(sites.clone(), index, cfg.y_variables[..1].to_vec(), cfg.x_variables[..1].to_vec(), sim.y, sim.x, adjacency.clone())?;
    write_panel_csv(&out.join("panel.csv"), &panel)?;
    write_adjacency_csv(&out.join("adjacency.csv"), &sites, &adjacency)?;
    write_json(&out.join("truth.json"), &truth)?;
    let mut buf = Vec::new();
    for (t, row) in sim.factors.values.row_iter().enumerate() {
        let vals: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        buf.extend_from_slice(format!("{},{}\n", t + 1, vals.join(",")).as_bytes());
    }
    let k = sim.factors.values.ncols();
    let header: Vec<String> = (0..k).map(|j| format!("d{j}")).collect();
    let mut file = format!("t,{}\n", header.join(",")).into_bytes();
    file.extend(buf);
    write_atomic(&out.join("factors.csv"), &file)?;
    Ok(json!({"out": out, "sites": sites.len(), "periods": periods}))
}

fn ranks(cfg: &RunConfig, draws: &Path, out: &Path) -> Result<Value> {
    let (chains, _) = chains_in(draws)?;
    let post = rank_posterior(chains.iter().flat_map(|c| c.params.iter().map(|p| &p.ecm)), cfg.rank_threshold)?;
    let mut buf = Vec::new();
    post.write_csv(&mut buf)?;
    write_atomic(out, &buf)?;
    let modes: serde_json::Map<String, Value> = RANK_NAMES.iter().enumerate().map(|(j, n)| (n.to_string(), json!(post.mode(j)))).collect();
    Ok(json!({"out": out, "draws": post.n_draws, "modes": modes}))
}

fn select(cfg: &RunConfig, data: &DataArgs, out: &Path) -> Result<Value> {
    let (_, train, _) = prepared_panel(cfg, data)?;
    let input = GridInput {
        y: &train.y,
        x: &train.x,
        adjacency: &train.adjacency,
        n_y_vars: cfg.y_variables.len(),
        n_x_vars: cfg.x_variables.len(),
        order: cfg.order,
        prior: &cfg.prior,
        regions: train.regions.as_deref(),
    };
    let points = grid_search(&input, &cfg.select_grid, &cfg.chain_config(), cfg.zeta)?;
    write_grid_csv(out, &points)?;
    let best = points.first().filter(|p| p.result.is_ok()).map(|p| (p.m, p.l));
    Ok(json!({"out": out, "best": best, "points": points.len()}))
}

fn diagnose(draws: &Path, out: &Path) -> Result<Value> {
    let (chains, _) = chains_in(draws)?;
    let table = convergence_table(&chains)?;
    let mut buf = String::from("parameter,rhat\n");
    for (name, r) in &table {
        buf += &format!("{name},{r}\n");
    }
    write_atomic(out, buf.as_bytes())?;
    let max = table.iter().map(|(_, r)| *r).fold(f64::NEG_INFINITY, f64::max);
    let deviance = table.first().map(|(_, r)| *r);
    Ok(json!({"out": out, "chains": chains.len(), "deviance_rhat": deviance, "max_rhat": max, "converged": max < 1.1}))
}
