//! Command-line interface: certificate conversions, finite-chain reports,
//! RWM mixing bounds, and seeded simulation, emitting machine-readable JSON
//! reports and tidy CSV curves.
//!
//! Exit codes: 0 success, 2 validation failure, 3 numerical failure.

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use subgeo::chain::{self, fixtures, FiniteChain};
use subgeo::rwm::{self, TargetSpec};
use subgeo::sim;
use subgeo::wpi::{DecayProfile, ParamTag, WpiCertificate};
use subgeo::SubgeoError;

#[derive(Parser)]
#[command(
    name = "subgeo",
    version,
    about = "Weak Poincaré calculus and subgeometric mixing bounds for Markov chains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a WPI certificate between parametrizations
    Convert(ConvertArgs),
    /// Analyze a finite chain and emit a report
    Chain(ChainArgs),
    /// Evaluate the RWM mixing-time bound for a heavy-tailed family
    RwmBound(RwmBoundArgs),
    /// Run a seeded simulation and write trajectories plus diagnostics
    Simulate(SimulateArgs),
    /// Write a named built-in fixture as chain JSON
    Fixture(FixtureArgs),
}

#[derive(Args)]
struct ConvertArgs {
    /// input certificate JSON
    #[arg(long = "in")]
    input: PathBuf,
    /// target parametrization
    #[arg(long, value_parser = ["alpha", "beta", "kstar"])]
    to: String,
    #[arg(long)]
    out: PathBuf,
    /// also write a gamma decay table (columns n,gamma)
    #[arg(long)]
    gamma_table: Option<PathBuf>,
}

#[derive(Args)]
struct ChainArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_parser = ["conductance", "decay", "beta-lower", "rupi", "duality"])]
    report: String,
    /// test function as a JSON array, for decay reports
    #[arg(long)]
    f: Option<PathBuf>,
    /// horizon (decay, duality) or resolvent cap (rupi)
    #[arg(long)]
    n: Option<u32>,
    /// analyze the product kernel (P*)^k P^k instead of P
    #[arg(long)]
    power_k: Option<u32>,
    /// write curves as CSV next to the JSON report
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct RwmBoundArgs {
    #[arg(long, value_parser = ["student_t", "product_student", "subexp_product"])]
    family: String,
    #[arg(long)]
    d: u32,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    varsigma: f64,
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 1.0)]
    u: f64,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FixtureArgs {
    /// counterexample | circle | two-state | jump-grid | independent
    name: String,
    #[arg(long)]
    out: PathBuf,
    /// counterexample levels K
    #[arg(long, default_value_t = 8)]
    levels: usize,
    /// counterexample geometric ratio
    #[arg(long, default_value_t = 0.5)]
    ratio: f64,
    /// circle / independent size
    #[arg(long, default_value_t = 5)]
    m: usize,
    #[arg(long, default_value_t = 0.3)]
    p: f64,
    #[arg(long, default_value_t = 0.5)]
    q: f64,
    #[arg(long, default_value_t = 4.0)]
    a: f64,
    #[arg(long, default_value_t = 1.0)]
    b: f64,
    #[arg(long, default_value_t = 1e4)]
    grid_max: f64,
    #[arg(long, default_value_t = 1.25)]
    grid_step: f64,
}

fn main() {
    let cli = Cli::parse();
    if let Ok(threads) = std::env::var("SUBGEO_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let code = match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            classify(&e)
        }
    };
    std::process::exit(code);
}

/// 2 for validation problems, 3 for numerical failures.
fn classify(e: &anyhow::Error) -> i32 {
    match e.downcast_ref::<SubgeoError>() {
        Some(SubgeoError::Numerical(_)) | Some(SubgeoError::NonConvergent(_)) => 3,
        _ => 2,
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Convert(a) => convert(a),
        Command::Chain(a) => chain_report(a),
        Command::RwmBound(a) => rwm_bound(a),
        Command::Simulate(a) => simulate(a),
        Command::Fixture(a) => fixture(a),
    }
}

/// Write atomically: temp file in the target directory, then rename.
fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let name = path.file_name().unwrap_or_default().to_string_lossy();
    let tmp = match path.parent().filter(|p| !p.as_os_str().is_empty()) {
        Some(d) => d.join(format!(".{name}.tmp")),
        None => PathBuf::from(format!(".{name}.tmp")),
    };
    {
        let mut f =
            fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn convert(a: ConvertArgs) -> anyhow::Result<()> {
    let cert: WpiCertificate = read_json(&a.input)?;
    let target = match a.to.as_str() {
        "alpha" => ParamTag::Alpha,
        "beta" => ParamTag::Beta,
        _ => ParamTag::KStar,
    };
    let out = cert.convert(target)?;
    write_json(&a.out, &out)?;
    if let Some(gpath) = a.gamma_table {
        let prof = DecayProfile::new(&cert)?;
        let mut csv = String::from("n,gamma\n");
        for i in 0..=30 {
            let n = 10f64.powf(i as f64 / 10.0).round();
            let g = prof.gamma_at(n)?;
            csv.push_str(&format!("{n},{g}\n"));
        }
        write_atomic(&gpath, csv.as_bytes())?;
    }
    println!("{}", json!({"converted_to": a.to, "out": a.out}));
    Ok(())
}

fn chain_report(a: ChainArgs) -> anyhow::Result<()> {
    let c: FiniteChain = read_json(&a.input)?;
    c.validate()?;
    let subject = match a.power_k {
        Some(k) => c.product_kernel(k)?,
        None => c.clone(),
    };
    let kernel_name = match a.power_k {
        Some(k) => format!("(P*)^{k} P^{k}"),
        None => "P".to_string(),
    };
    let report = match a.report.as_str() {
        "conductance" => {
            let prof = chain::weak_conductance_exact(&subject)?;
            if let Some(csvp) = &a.csv {
                let mut csv = String::from("v,phi\n");
                for k in &prof.knots {
                    csv.push_str(&format!("{},{}\n", k.v, k.phi));
                }
                write_atomic(csvp, csv.as_bytes())?;
            }
            json!({
                "kernel": kernel_name,
                "knots": prof.knots.iter().map(|k| json!({
                    "v": k.v,
                    "phi": k.phi,
                    "witness": k.witness.iter().map(|&i| c.states[i].clone()).collect::<Vec<_>>(),
                })).collect::<Vec<_>>(),
            })
        }
        "decay" => {
            let n = a.n.unwrap_or(100) as usize;
            let f: Vec<f64> = match &a.f {
                Some(p) => read_json(p)?,
                None => {
                    let mut v = vec![0.0; c.n()];
                    v[0] = 1.0;
                    v
                }
            };
            if f.len() != c.n() {
                bail!(SubgeoError::InvalidParameter(format!(
                    "test function has {} entries for {} states",
                    f.len(),
                    c.n()
                )));
            }
            let d_p = chain::exact_decay(&subject, &f, n);
            let s_chain = subject.reversibilize()?;
            let d_s = chain::exact_decay(&s_chain, &f, n);
            if let Some(csvp) = &a.csv {
                let mut csv = String::from("n,value,value_reversibilized\n");
                for i in 0..=n {
                    csv.push_str(&format!("{},{},{}\n", i, d_p.values[i], d_s.values[i]));
                }
                write_atomic(csvp, csv.as_bytes())?;
            }
            json!({
                "kernel": kernel_name,
                "osc": d_p.osc,
                "final_value": d_p.values[n],
                "final_value_reversibilized": d_s.values[n],
                "fitted_exponent": d_p.fitted_exponent(),
                "fitted_exponent_reversibilized": d_s.fitted_exponent(),
            })
        }
        "beta-lower" => {
            let s_grid: Vec<f64> = (0..40).map(|i| 0.1 * 10f64.powf(i as f64 / 8.0)).collect();
            let ind = chain::beta_lower_indicator(&subject, &s_grid)?;
            let sticky = chain::beta_lower_sticky(&subject, &s_grid);
            let exact = if subject.n() == 2 {
                Some(chain::beta_star_exact_two_state(&subject, &s_grid)?)
            } else {
                None
            };
            if let Some(csvp) = &a.csv {
                let mut csv = String::from("s,indicator,sticky\n");
                for (i, (s, v)) in ind.iter().enumerate() {
                    csv.push_str(&format!("{},{},{}\n", s, v, sticky[i].1));
                }
                write_atomic(csvp, csv.as_bytes())?;
            }
            json!({
                "kernel": kernel_name,
                "indicator": ind,
                "sticky": sticky,
                "exact_two_state": exact,
            })
        }
        "rupi" => {
            let m_max = a.n.unwrap_or(2 * c.n() as u32 + 2);
            let v = chain::rupi_check(&subject, m_max);
            let absorbing: Vec<String> = (0..subject.n())
                .filter(|&i| subject.p[i][i] == 1.0)
                .map(|i| c.states[i].clone())
                .collect();
            json!({
                "kernel": kernel_name,
                "is_rupi": v.is_rupi,
                "witness_m": v.witness_m,
                "violating_pair": v.violating_pair.map(|(x, y)| {
                    (c.states[x].clone(), c.states[y].clone())
                }),
                "absorbing_states": absorbing,
            })
        }
        "duality" => {
            let n = a.n.unwrap_or(3);
            let r = chain::duality_check(&subject, n)?;
            serde_json::to_value(&r)?
        }
        other => bail!(SubgeoError::InvalidParameter(format!("unknown report {other}"))),
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn rwm_bound(a: RwmBoundArgs) -> anyhow::Result<()> {
    let spec = match a.family.as_str() {
        "student_t" => TargetSpec::StudentT {
            d: a.d,
            tau: a.tau.context("--tau required for student_t")?,
        },
        "product_student" => TargetSpec::ProductStudent {
            d: a.d,
            eta: a.eta.context("--eta required for product_student")?,
        },
        _ => TargetSpec::SubexpProduct {
            d: a.d,
            eta: a.eta.context("--eta required for subexp_product")?,
            tau: a.tau.context("--tau required for subexp_product")?,
        },
    };
    let rep = rwm::rwm_mixing_time(&spec, a.varsigma, a.eps, a.u)?;
    let wcp = rwm::rwm_wcp_bound(&spec, a.varsigma)?;
    let vs = [0.05, 0.1, 0.25, 0.5];
    let out = json!({
        "report": rep,
        "conductance_lower_bound": {
            "v": vs,
            "phi": vs.map(|v| wcp.phi_lb.eval(v)),
        },
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn simulate(a: SimulateArgs) -> anyhow::Result<()> {
    let config: sim::SimConfig = read_json(&a.config)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let ens = sim::run(&config)?;
    // trajectories as tidy CSV
    let dim = ens.replicas[0].states[0].len();
    let mut csv = String::from("replica,step");
    for i in 0..dim {
        csv.push_str(&format!(",x{i}"));
    }
    csv.push_str(",accepted");
    let has_w = ens.replicas[0].weights.is_some();
    if has_w {
        csv.push_str(",weight");
    }
    csv.push('\n');
    for (r, t) in ens.replicas.iter().enumerate() {
        for (s, state) in t.states.iter().enumerate() {
            csv.push_str(&format!("{r},{s}"));
            for x in state {
                csv.push_str(&format!(",{x}"));
            }
            if s == 0 {
                csv.push(',');
            } else {
                csv.push_str(&format!(",{}", t.accepts[s - 1] as u8));
            }
            if let Some(ws) = &t.weights {
                csv.push_str(&format!(",{}", ws[s]));
            }
            csv.push('\n');
        }
    }
    write_atomic(&a.out.join("trajectories.csv"), csv.as_bytes())?;

    // diagnostics, with analytic comparisons where available
    let (acc, se) = sim::mean_acceptance(&ens);
    let mut diag = serde_json::Map::new();
    diag.insert("mean_acceptance".into(), json!(acc));
    diag.insert("acceptance_se".into(), json!(se));
    if let (sim::TargetCfg::HeavyTail { spec }, sim::KernelCfg::Rwm { sigma }) =
        (&config.target, &config.kernel)
    {
        if let Ok(s) = rwm::smoothness_constant(spec) {
            let varsigma = sigma * (s.l * spec.d() as f64).sqrt();
            let floor = 0.5 * (-0.5 * varsigma * varsigma).exp();
            diag.insert("acceptance_floor_analytic".into(), json!(floor));
            diag.insert("implied_varsigma".into(), json!(varsigma));
            diag.insert(
                "acceptance_above_floor".into(),
                json!(acc >= floor - 3.0 * se),
            );
        }
    }
    if let sim::TargetCfg::Jump { a: ja, b: jb } = &config.target {
        // stationary marginal tail exponent vs a - b - 1
        let xs: Vec<f64> = ens
            .replicas
            .iter()
            .flat_map(|t| t.states.iter().skip(10).step_by(7).map(|s| s[0].exp()))
            .collect();
        let mut lx = Vec::new();
        let mut ly = Vec::new();
        for &t in &[2.0, 3.0, 4.5, 7.0, 10.0] {
            let frac = xs.iter().filter(|&&x| x >= t).count() as f64 / xs.len() as f64;
            if frac > 0.0 {
                lx.push(t.ln());
                ly.push(frac.ln());
            }
        }
        if lx.len() >= 3 {
            diag.insert(
                "stationary_tail_exponent".into(),
                json!(-subgeo::quad::ls_slope(&lx, &ly)),
            );
            diag.insert("stationary_tail_expected".into(), json!(ja - jb - 1.0));
        }
    }
    write_json(
        &a.out.join("diagnostics.json"),
        &serde_json::Value::Object(diag),
    )?;
    println!("{}", json!({"out": a.out, "replicas": ens.replicas.len()}));
    Ok(())
}

fn fixture(a: FixtureArgs) -> anyhow::Result<()> {
    let chain: FiniteChain = match a.name.as_str() {
        "counterexample" => {
            let nu = fixtures::geometric_pmf(a.ratio, a.levels);
            fixtures::counterexample_chain(&nu)?
        }
        "circle" => fixtures::circle_walk(a.m)?,
        "two-state" => fixtures::two_state(a.p, a.q)?,
        "jump-grid" => fixtures::jump_chain(a.a, a.b, a.grid_max, a.grid_step)?.chain,
        "independent" => fixtures::independent_kernel(&vec![1.0 / a.m as f64; a.m])?,
        other => bail!(SubgeoError::InvalidParameter(format!("unknown fixture {other}"))),
    };
    write_json(&a.out, &chain)?;
    println!(
        "{}",
        json!({"fixture": a.name, "states": chain.n(), "out": a.out})
    );
    Ok(())
}
