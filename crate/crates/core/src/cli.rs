//! Command-line front end: argument parsing, report assembly and atomic
//! file output.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{LabError, Result};
use crate::greedy::{constants_report, fundamental_profile, recheck, Budget, SlcFamily, ENUM_CAP};
use crate::renorm::{
    almost_greedy_pipeline, almost_greedy_renorm, lattice_renorm, main_renorm, pipeline_renorm,
    subsym_renorm, Constant, MainCaps, SigmaPolicy,
};
use crate::seqlab::{check_regularity, dini_regularize, doubling_minorant, PosSequence};
use crate::space::{Descriptor, SpaceModel};
use crate::verify::{
    almost_envelope, main_envelope, model_suite, sample_vectors, sequence_suite, SuiteCaps,
    Tolerances,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "greedylab",
    version,
    about = "Greedy-algorithm constants and renormings of finite basis models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Basis constants and fundamental profile of a model.
    Analyze(AnalyzeArgs),
    /// Build a renormed model and its constants.
    Renorm(RenormArgs),
    /// Run the invariant suites and write verify.json.
    Verify(VerifyArgs),
    /// Dual, regularity, Dini regularization and doubling minorant of a sequence.
    Sequence(SequenceArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Seed of the randomized searches.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Enumeration and sampling caps, as inline JSON or a path to a JSON file.
    #[arg(long)]
    pub caps: Option<String>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Space descriptor JSON file.
    #[arg(long)]
    pub space: PathBuf,
    /// Sequence used for the embedding constant (defaults to the fundamental function).
    #[arg(long)]
    pub sigma: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Main,
    AlmostGreedy,
    Lattice,
    Subsymmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Dini,
}

#[derive(Debug, Args)]
pub struct RenormArgs {
    #[arg(long)]
    pub space: PathBuf,
    /// Sequence file.
    #[arg(long, conflicts_with = "sigma_policy")]
    pub sigma: Option<PathBuf>,
    /// Derive σ by Dini regularization of the fundamental function.
    #[arg(long, value_enum)]
    pub sigma_policy: Option<PolicyArg>,
    #[arg(long, value_enum, default_value = "main")]
    pub kind: Kind,
    /// Overrides the computed δ of the almost-greedy renorming.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Target ε of the almost-greedy renorming.
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Space descriptor; without it only the sequence suites run.
    #[arg(long)]
    pub space: Option<PathBuf>,
    /// Tolerance overrides, as inline JSON or a path to a JSON file.
    #[arg(long)]
    pub tol: Option<String>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct SequenceArgs {
    #[arg(long)]
    pub sigma: PathBuf,
    /// Fail with exit code 4 when the Dini regularization is not defined.
    #[arg(long, value_enum)]
    pub sigma_policy: Option<PolicyArg>,
    #[command(flatten)]
    pub common: CommonArgs,
}

/// Every cap accepted by `--caps`; each command reads the ones it uses.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Caps {
    pub samples: Option<usize>,
    pub heavy_samples: Option<usize>,
    pub probes: Option<usize>,
    pub enum_cap: Option<usize>,
    pub slc_cap: Option<usize>,
    pub slc_grid: Option<Vec<f64>>,
    pub slc_g_support: Option<usize>,
    pub slc_equal_sizes: Option<bool>,
    pub max_set: Option<usize>,
    pub window: Option<usize>,
    pub k_schedule: Option<Vec<usize>>,
    pub eval_vectors: Option<usize>,
    pub r_max: Option<usize>,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cmd: &Command) -> Result<i32> {
    match cmd {
        Command::Analyze(a) => analyze(a),
        Command::Renorm(a) => renorm(a),
        Command::Verify(a) => verify(a),
        Command::Sequence(a) => sequence(a),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| LabError::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| LabError::InvalidInput(format!("{}: {e}", path.display())))
}

/// Inline JSON when the argument starts with `{`, otherwise a file path.
fn inline_or_file<T: serde::de::DeserializeOwned + Default>(arg: &Option<String>) -> Result<T> {
    match arg {
        None => Ok(T::default()),
        Some(s) if s.trim_start().starts_with('{') => serde_json::from_str(s)
            .map_err(|e| LabError::InvalidInput(format!("bad JSON option: {e}"))),
        Some(p) => read_json(Path::new(p)),
    }
}

pub fn load_space(path: &Path) -> Result<SpaceModel> {
    let desc: Descriptor = read_json(path)?;
    SpaceModel::from_descriptor(desc)
}

pub fn load_sigma(path: &Path) -> Result<PosSequence> {
    read_json(path)
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.flush()?;
    let target = dir.join(name);
    tmp.persist(&target).map_err(|e| LabError::Io(e.error))?;
    Ok(target)
}

fn to_json(v: &Value) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn anchor_of(name: &str) -> &'static str {
    match name {
        "K_u" => "§2 lattice unconditionality",
        "K_su" => "§2 suppression unconditionality",
        "democracy" => "§2 democracy",
        "superdemocracy" => "§2 superdemocracy",
        "slc" => "§2 symmetry for largest coefficients",
        "bidemocracy" => "§2 bidemocracy",
        "quasi_greedy" => "§2 quasi-greedy",
        "suppression_quasi_greedy" => "§2 suppression quasi-greedy",
        "K_g" => "§2 greedy constant",
        "almost_greedy" => "§2 almost-greedy",
        "C_e" => "(2.4)",
        _ => "§2 unconditionality parameters",
    }
}

fn profile_csv(space: &SpaceModel) -> Result<(String, crate::greedy::FundamentalProfile)> {
    let p = fundamental_profile(space)?;
    let mut s = String::from("m,phi_u,phi_l,phi_u_dual,phi_l_dual\n");
    for m in 0..space.dim() {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            m + 1,
            p.phi_u[m],
            p.phi_l[m],
            p.phi_u_dual[m],
            p.phi_l_dual[m]
        );
    }
    Ok((s, p))
}

fn analyze(a: &AnalyzeArgs) -> Result<i32> {
    let space = load_space(&a.space)?;
    let caps: Caps = inline_or_file(&a.common.caps)?;
    let sigma = a.sigma.as_deref().map(load_sigma).transpose()?;
    let enum_cap = caps.enum_cap.unwrap_or(ENUM_CAP);
    if space.dim() > enum_cap.min(ENUM_CAP) {
        return Err(LabError::CapExceeded(format!(
            "dimension {} exceeds the enumeration cap {enum_cap}",
            space.dim()
        )));
    }
    let defaults = SlcFamily::default();
    let budget = Budget {
        samples: caps.samples.unwrap_or(Budget::default().samples),
        seed: a.common.seed,
        family: SlcFamily {
            cap: caps.slc_cap.unwrap_or(defaults.cap),
            grid: caps.slc_grid.clone().unwrap_or(defaults.grid),
            g_support: caps.slc_g_support.unwrap_or(defaults.g_support),
            equal_sizes: caps.slc_equal_sizes.unwrap_or(defaults.equal_sizes),
        },
        enum_cap,
        sigma,
    };
    let report = constants_report(&space, &budget)?;
    let rechecked = recheck(&space, &report)?;
    let (csv, profile) = profile_csv(&space)?;
    let entries: Vec<Value> = report
        .entries()
        .into_iter()
        .map(|(name, e)| {
            json!({
                "name": name,
                "anchor": anchor_of(&name),
                "value": e.value,
                "mode": e.mode,
                "witness": e.witness,
            })
        })
        .collect();
    let checks: Vec<Value> = rechecked
        .iter()
        .map(|(n, r, x)| json!({"name": n, "reported": r, "recomputed": x}))
        .collect();
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "analyze",
        "space": space.descriptor(),
        "label": space.label(),
        "dim": space.dim(),
        "seed": a.common.seed,
        "budget": budget,
        "constants": entries,
        "witness_recheck": checks,
        "profile": profile,
    });
    let out = &a.common.out;
    write_atomic(out, "constants.json", &to_json(&doc)?)?;
    write_atomic(out, "profile.csv", &csv)?;
    let mut summary = format!(
        "{} (dim {}), seed {}\n",
        space.label(),
        space.dim(),
        a.common.seed
    );
    for (name, e) in report.entries() {
        let mode = match e.mode {
            crate::greedy::Mode::Exact => "exact",
            crate::greedy::Mode::LowerBoundEstimate => "lower bound",
        };
        let _ = writeln!(summary, "  {name:<26} {:>14.9}  {mode}", e.value);
    }
    write_atomic(out, "summary.txt", &summary)?;
    print!("{summary}");
    Ok(0)
}

fn sigma_policy(a: &RenormArgs) -> Result<SigmaPolicy> {
    match (&a.sigma, a.sigma_policy) {
        (Some(p), _) => Ok(SigmaPolicy::Given(load_sigma(p)?)),
        (None, Some(PolicyArg::Dini)) => Ok(SigmaPolicy::Dini),
        (None, None) => Err(LabError::InvalidInput(
            "this kind needs --sigma or --sigma-policy dini".into(),
        )),
    }
}

fn renorm(a: &RenormArgs) -> Result<i32> {
    let space = load_space(&a.space)?;
    let caps: Caps = inline_or_file(&a.common.caps)?;
    let mut info = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "renorm",
        "kind": a.kind,
        "base": space.label(),
        "seed": a.common.seed,
    });
    let model = match a.kind {
        Kind::Main => {
            let out = pipeline_renorm(&space, &sigma_policy(a)?, a.eps)?;
            let mut spec = match out.model.descriptor() {
                Descriptor::MainRenorm(s) => s.as_ref().clone(),
                _ => unreachable!(),
            };
            if let Some(d) = a.delta {
                spec.constants.delta = Constant::user(d);
            }
            spec.caps = MainCaps {
                max_set: caps.max_set,
            };
            let (lo, hi) = main_envelope(&spec.constants);
            info["anchor"] = json!("Theorem 3.4");
            info["sigma"] = json!(out.sigma);
            info["constants"] = json!(spec.constants);
            info["envelope"] = json!({"lower": lo, "upper": hi, "relative_to": spec.base.label()});
            main_renorm(spec)?
        }
        Kind::AlmostGreedy => {
            let out = almost_greedy_pipeline(&space, &sigma_policy(a)?, a.eps)?;
            let mut spec = match out.model.descriptor() {
                Descriptor::AlmostGreedyRenorm(s) => s.as_ref().clone(),
                _ => unreachable!(),
            };
            let model = match a.delta {
                Some(d) => {
                    spec.constants.delta = Constant::user(d);
                    almost_greedy_renorm(spec.clone())?
                }
                None => out.model,
            };
            let (lo, hi) = almost_envelope(&spec.constants);
            info["anchor"] = json!("Theorem 3.5");
            info["sigma"] = json!(out.sigma);
            info["eps"] = json!(a.eps);
            info["constants"] = json!(spec.constants);
            info["envelope"] = json!({"lower": lo, "upper": hi, "relative_to": spec.base.label()});
            model
        }
        Kind::Lattice => {
            info["anchor"] = json!("Lemma 4.1");
            info["envelope"] =
                json!({"lower": 1.0, "upper": Value::Null, "relative_to": space.label()});
            lattice_renorm(&space)?
        }
        Kind::Subsymmetric => {
            let window = caps.window.unwrap_or(space.dim());
            let ks = caps.k_schedule.clone().unwrap_or_else(|| vec![1, 2, 4, 8]);
            info["anchor"] = json!("Lemma 5.1");
            info["window"] = json!(window);
            info["k_schedule"] = json!(ks);
            subsym_renorm(&space, window, ks)?
        }
    };
    let mut desc = serde_json::to_value(model.descriptor())?;
    desc["schema_version"] = json!(SCHEMA_VERSION);
    let out = &a.common.out;
    write_atomic(out, "renormed.json", &to_json(&desc)?)?;
    write_atomic(out, "renorm_constants.json", &to_json(&info)?)?;

    let count = caps.eval_vectors.unwrap_or(20);
    let mut csv = String::from("index,old,new,ratio\n");
    for (k, v) in sample_vectors(&model, count, a.common.seed)
        .iter()
        .enumerate()
    {
        let mut padded = v.clone();
        padded.resize(space.dim(), 0.0);
        let old = space.norm(&padded)?;
        let new = model.norm(v)?;
        let _ = writeln!(csv, "{k},{old},{new},{}", new / old);
    }
    write_atomic(out, "eval.csv", &csv)?;
    println!(
        "{} -> {} (dim {})",
        space.label(),
        model.label(),
        model.dim()
    );
    Ok(0)
}

fn verify(a: &VerifyArgs) -> Result<i32> {
    let tol: Tolerances = inline_or_file(&a.tol)?;
    let caps: Caps = inline_or_file(&a.common.caps)?;
    let d = SuiteCaps::default();
    let suite_caps = SuiteCaps {
        samples: caps.samples.unwrap_or(d.samples),
        heavy_samples: caps.heavy_samples.unwrap_or(d.heavy_samples),
        probes: caps.probes.unwrap_or(d.probes),
        slc_cap: caps.slc_cap.unwrap_or(d.slc_cap),
    };
    let space = a.space.as_deref().map(load_space).transpose()?;
    let mut checks = sequence_suite(&tol)?;
    if let Some(s) = &space {
        checks.extend(model_suite(s, &suite_caps, a.common.seed, &tol)?);
    }
    let failures = checks.iter().filter(|c| !c.passed).count();
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "verify",
        "seed": a.common.seed,
        "space": space.as_ref().map(|s| s.label()),
        "tolerances": tol,
        "caps": suite_caps,
        "checks": checks,
        "failures": failures,
        "passed": failures == 0,
    });
    write_atomic(&a.common.out, "verify.json", &to_json(&doc)?)?;
    for c in &checks {
        println!(
            "{} {:<28} [{}] worst {:.3e} tol {:.1e}",
            if c.passed { "PASS" } else { "FAIL" },
            c.id,
            c.anchor,
            c.worst,
            c.tolerance
        );
    }
    Ok(if failures == 0 { 0 } else { 1 })
}

fn sequence(a: &SequenceArgs) -> Result<i32> {
    let s = load_sigma(&a.sigma)?;
    let caps: Caps = inline_or_file(&a.common.caps)?;
    let out = &a.common.out;
    let reg = check_regularity(&s, caps.r_max.unwrap_or(16))?;
    write_atomic(out, "sequence.csv", &s.to_csv())?;
    let mut doc = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "sequence",
        "horizon": s.horizon(),
        "regularity": reg,
        "anchor": "Lemma 3.1",
    });
    match dini_regularize(&s) {
        Ok(d) => {
            write_atomic(out, "dini.csv", &d.to_csv())?;
            doc["dini"] = json!(d);
        }
        Err(e) if a.sigma_policy.is_some() => return Err(e),
        Err(e) => doc["dini_error"] = json!(e.to_string()),
    }
    match doubling_minorant(&s) {
        Ok(g) => {
            write_atomic(out, "minorant.csv", &g.to_csv())?;
            doc["minorant"] = json!(g);
        }
        Err(e) => doc["minorant_error"] = json!(e.to_string()),
    }
    write_atomic(out, "sequence.json", &to_json(&doc)?)?;
    println!(
        "horizon {}: lrp {:?}, urp {:?}, dini constant {:?}",
        s.horizon(),
        reg.lrp_witness,
        reg.urp_witness,
        reg.dini_constant
    );
    Ok(0)
}
