use std::fs;
use std::path::{Path, PathBuf};

use itertools::Itertools;
use quacc::association::{quacc_test, NullHypothesis, QuaccOptions};
use quacc::bench::{
    graph_table, rejection_table, run_graph, run_rejection, Backend, GraphConfig, RejectionConfig,
};
use quacc::citest::{CiTest, PartialCorrelationTest, QuaccCiTest};
use quacc::dataset::{jitter_column, qq_transform, Column, Dataset};
use quacc::metrics::Table;
use quacc::rng::{label_hash, stream, SeededRng};
use quacc::skeleton::{majority_vote, pc_skeleton, Skeleton};
use quacc::synth::{gen_graph, gen_pairwise_with, DgpSpec, Setting, TrueGraph};
use rand::seq::index;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::options::{parse_f64_list, parse_names, parse_taus, validate_alpha, validate_folds};
use crate::{
    BackendArg, BenchGraphArgs, EstimationArgs, FormatArg, GraphArgs, ModeArg, PairwiseArgs,
    PreprocessArgs, RejectArgs, SimulateArgs, TestArgs,
};

struct Checked {
    taus: Vec<f64>,
    folds: usize,
    alpha: f64,
}

fn check(est: &EstimationArgs) -> CliResult<Checked> {
    validate_folds(est.folds)?;
    validate_alpha(est.alpha)?;
    Ok(Checked {
        taus: parse_taus(&est.tau)?,
        folds: est.folds,
        alpha: est.alpha,
    })
}

fn delimiter(c: char) -> CliResult<u8> {
    u8::try_from(c).ok().filter(u8::is_ascii).ok_or_else(|| {
        CliError::Config(format!(
            "delimiter must be a single ASCII character, got `{c}`"
        ))
    })
}

fn load(path: &Path, delim: char) -> CliResult<Dataset> {
    let d = delimiter(delim)?;
    Dataset::load_csv(path, d).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Loads the file, then jitters the requested columns and optionally
/// QQ-transforms every column, in that order.
fn load_prepared(path: &Path, delim: char, pre: &PreprocessArgs, seed: u64) -> CliResult<Dataset> {
    let mut data = load(path, delim)?;
    let jitter = parse_names(&pre.jitter);
    let refs: Vec<&str> = jitter.iter().map(String::as_str).collect();
    require_columns(&data, path, &refs)?;
    let fail = |name: &str, e: quacc::QuaccError| CliError::Data(format!("column `{name}`: {e}"));
    for name in &jitter {
        let mut rng = stream(seed, label_hash(&["jitter", name]));
        let values = jitter_column(data.column(name)?, &mut rng).map_err(|e| fail(name, e))?;
        data = data.with_column(Column::new(name.as_str(), values))?;
    }
    if pre.qq_transform {
        let names: Vec<String> = data.names().into_iter().map(String::from).collect();
        for name in &names {
            let values = qq_transform(data.column(name)?).map_err(|e| fail(name, e))?;
            data = data.with_column(Column::new(name.as_str(), values))?;
        }
    }
    Ok(data)
}

fn require_columns(data: &Dataset, path: &Path, names: &[&str]) -> CliResult<()> {
    match names.iter().find(|n| !data.has_column(n)) {
        Some(missing) => Err(CliError::Data(format!(
            "column `{missing}` not found in {}",
            path.display()
        ))),
        None => Ok(()),
    }
}

/// Named variables, or every column when the list is empty.
fn variables(data: &Dataset, path: &Path, spec: &str) -> CliResult<Vec<String>> {
    let vars = parse_names(spec);
    let vars = if vars.is_empty() {
        data.names().into_iter().map(String::from).collect()
    } else {
        vars
    };
    let refs: Vec<&str> = vars.iter().map(String::as_str).collect();
    require_columns(data, path, &refs)?;
    if vars.len() < 2 {
        return Err(CliError::Config("need at least two variables".into()));
    }
    if vars.iter().duplicates().next().is_some() {
        return Err(CliError::Config("variable list has duplicates".into()));
    }
    Ok(vars)
}

fn write(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|source| CliError::Output {
        path: path.display().to_string(),
        source,
    })
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|source| CliError::Output {
        path: dir.display().to_string(),
        source,
    })
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

fn tau_stream(seed: u64, tau: f64) -> SeededRng {
    stream(seed, tau.to_bits())
}

fn tau_label(tau: f64) -> String {
    format!("tau{tau}")
}

#[derive(Serialize)]
struct TestRow {
    tau: f64,
    rho_hat: f64,
    rho_star: f64,
    null_value: f64,
    z_stat: f64,
    p_value: f64,
    std_error: f64,
    n_effective: usize,
    reject: bool,
}

#[derive(Serialize)]
struct TestReport {
    command: &'static str,
    data: String,
    y: String,
    x: String,
    z: Vec<String>,
    alpha: f64,
    folds: usize,
    seed: u64,
    null: NullHypothesis,
    results: Vec<TestRow>,
}

pub fn test(a: &TestArgs) -> CliResult<()> {
    let c = check(&a.est)?;
    let null = match a.null_value {
        Some(v) if v > 0.0 && v < 1.0 => NullHypothesis::Concordance(v),
        Some(v) => {
            return Err(CliError::Config(format!(
                "--null-value must lie in (0, 1), got {v}"
            )))
        }
        None => NullHypothesis::Independence,
    };
    let data = load_prepared(&a.data, a.delimiter, &a.pre, a.est.seed)?;
    let z = parse_names(&a.z);
    let mut involved = vec![a.y.as_str(), a.x.as_str()];
    involved.extend(z.iter().map(String::as_str));
    require_columns(&data, &a.data, &involved)?;
    let zs: Vec<&str> = z.iter().map(String::as_str).collect();

    let mut results = Vec::new();
    for &tau in &c.taus {
        let opts = QuaccOptions::new(tau)
            .folds(c.folds)
            .bandwidth(a.est.bandwidth.into())
            .null(null);
        let r = quacc_test(
            &data,
            &a.y,
            &a.x,
            &zs,
            &opts,
            &mut tau_stream(a.est.seed, tau),
        )?;
        results.push(TestRow {
            tau,
            rho_hat: r.rho_hat,
            rho_star: r.rho_star,
            null_value: r.null_value,
            z_stat: r.z_stat,
            p_value: r.p_value,
            std_error: r.std_error,
            n_effective: r.n_effective,
            reject: r.rejects(c.alpha),
        });
    }
    let report = TestReport {
        command: "test",
        data: a.data.display().to_string(),
        y: a.y.clone(),
        x: a.x.clone(),
        z,
        alpha: c.alpha,
        folds: c.folds,
        seed: a.est.seed,
        null,
        results,
    };
    let json = to_json(&report);
    if let Some(out) = &a.out {
        write(out, &json)?;
    }
    match a.format {
        FormatArg::Json => print!("{json}"),
        FormatArg::Table => {
            let mut t = Table::new(["tau", "rho_hat", "rho_star", "z", "p", "n"]);
            for r in &report.results {
                t.push([
                    r.tau.to_string(),
                    format!("{:.4}", r.rho_hat),
                    format!("{:.4}", r.rho_star),
                    format!("{:.3}", r.z_stat),
                    format!("{:.4}", r.p_value),
                    r.n_effective.to_string(),
                ])?;
            }
            print!("{}", t.to_aligned());
        }
    }
    Ok(())
}

fn ci_test(backend: BackendArg, tau: f64, est: &EstimationArgs) -> Box<dyn CiTest> {
    match backend {
        BackendArg::Quacc => {
            let mut t = QuaccCiTest::new(tau, est.seed);
            t.folds = est.folds;
            t.bandwidth = est.bandwidth.into();
            Box::new(t)
        }
        BackendArg::Pcorr => Box::new(PartialCorrelationTest),
    }
}

#[derive(Serialize)]
struct GraphOutput {
    label: String,
    edges: usize,
    json: String,
    dot: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    vote: Option<VoteOutput>,
}

#[derive(Serialize)]
struct VoteOutput {
    replicates: usize,
    subsample: usize,
    edges: usize,
    json: String,
    dot: String,
    replicate_skeletons: String,
}

fn emit_skeleton(dir: &Path, stem: &str, s: &Skeleton) -> CliResult<(String, String)> {
    let json = dir.join(format!("{stem}.json"));
    let dot = dir.join(format!("{stem}.dot"));
    write(&json, &to_json(s))?;
    write(&dot, &s.to_dot())?;
    Ok((json.display().to_string(), dot.display().to_string()))
}

pub fn graph(a: &GraphArgs) -> CliResult<()> {
    let c = check(&a.est)?;
    let data = load_prepared(&a.data, a.delimiter, &a.pre, a.est.seed)?;
    let vars = variables(&data, &a.data, &a.vars)?;
    let refs: Vec<&str> = vars.iter().map(String::as_str).collect();
    if a.replicates == 0 {
        return Err(CliError::Config("--replicates must be positive".into()));
    }
    let n = data.n_rows();
    let m = a.subsample.unwrap_or(n);
    if m == 0 || m > n {
        return Err(CliError::Config(format!(
            "--subsample must lie in 1..={n}, got {m}"
        )));
    }
    create_dir(&a.out_dir)?;

    let taus: Vec<Option<f64>> = match a.backend {
        BackendArg::Quacc => c.taus.iter().copied().map(Some).collect(),
        BackendArg::Pcorr => vec![None],
    };
    let mut outputs = Vec::new();
    for tau in taus {
        let label = tau.map_or_else(|| "pcorr".to_string(), tau_label);
        let test = ci_test(a.backend, tau.unwrap_or(0.5), &a.est);
        let full = pc_skeleton(&data, &refs, test.as_ref(), c.alpha, a.max_order)?;
        let (json, dot) = emit_skeleton(&a.out_dir, &format!("skeleton_{label}"), &full)?;
        let vote = if a.replicates > 1 {
            let reps: Vec<Skeleton> = (0..a.replicates)
                .into_par_iter()
                .map(|r| {
                    let sub = if m == n {
                        data.clone()
                    } else {
                        let mut rows =
                            index::sample(&mut stream(a.est.seed, r as u64), n, m).into_vec();
                        rows.sort_unstable();
                        data.select_rows(&rows)
                    };
                    pc_skeleton(&sub, &refs, test.as_ref(), c.alpha, a.max_order)
                })
                .collect::<quacc::Result<_>>()?;
            let voted = majority_vote(&reps)?;
            let (vjson, vdot) =
                emit_skeleton(&a.out_dir, &format!("skeleton_{label}_vote"), &voted)?;
            let all = a.out_dir.join(format!("skeleton_{label}_replicates.json"));
            write(&all, &to_json(&reps))?;
            Some(VoteOutput {
                replicates: a.replicates,
                subsample: m,
                edges: voted.edges.len(),
                json: vjson,
                dot: vdot,
                replicate_skeletons: all.display().to_string(),
            })
        } else {
            None
        };
        outputs.push(GraphOutput {
            label,
            edges: full.edges.len(),
            json,
            dot,
            vote,
        });
    }
    print!(
        "{}",
        to_json(&json!({ "command": "graph", "outputs": outputs }))
    );
    Ok(())
}

fn matrix_csv(vars: &[String], cells: &[Vec<Option<f64>>]) -> String {
    let mut t = Table::new(std::iter::once("variable".to_string()).chain(vars.iter().cloned()));
    for (v, row) in vars.iter().zip(cells) {
        let cells = row
            .iter()
            .map(|c| c.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}")));
        t.push(std::iter::once(v.clone()).chain(cells))
            .expect("square matrix");
    }
    t.to_csv().expect("in-memory csv")
}

pub fn pairwise(a: &PairwiseArgs) -> CliResult<()> {
    let c = check(&a.est)?;
    let data = load_prepared(&a.data, a.delimiter, &a.pre, a.est.seed)?;
    let vars = variables(&data, &a.data, &a.vars)?;
    create_dir(&a.out_dir)?;
    let modes: &[(&str, bool)] = match a.mode {
        ModeArg::Marginal => &[("marginal", false)],
        ModeArg::Maximal => &[("maximal", true)],
        ModeArg::Both => &[("marginal", false), ("maximal", true)],
    };
    let pairs: Vec<(usize, usize)> = (0..vars.len()).tuple_combinations().collect();
    let mut files = Vec::new();
    let mut warnings = Vec::new();
    for &tau in &c.taus {
        for &(mode, maximal) in modes {
            let results: Vec<((usize, usize), Option<(f64, f64)>, Option<String>)> = pairs
                .par_iter()
                .map(|&(i, j)| {
                    let z: Vec<&str> = if maximal {
                        (0..vars.len())
                            .filter(|&k| k != i && k != j)
                            .map(|k| vars[k].as_str())
                            .collect()
                    } else {
                        Vec::new()
                    };
                    let opts = QuaccOptions::new(tau)
                        .folds(c.folds)
                        .bandwidth(a.est.bandwidth.into());
                    let mut rng = stream(
                        a.est.seed,
                        quacc::rng::label_hash(&[&vars[i], &vars[j], mode, &tau.to_string()]),
                    );
                    match quacc_test(&data, &vars[i], &vars[j], &z, &opts, &mut rng) {
                        Ok(r) => Ok(((i, j), Some((r.rho_hat, r.p_value)), None)),
                        Err(e) if e.is_insufficient_sample() => Ok((
                            (i, j),
                            None,
                            Some(format!(
                                "{} ~ {} ({mode}, tau {tau}): {e}",
                                vars[i], vars[j]
                            )),
                        )),
                        Err(e) => Err(e),
                    }
                })
                .collect::<quacc::Result<_>>()?;
            let k = vars.len();
            let mut rho = vec![vec![None; k]; k];
            let mut p = vec![vec![None; k]; k];
            for ((i, j), value, warning) in results {
                if let Some((r, pv)) = value {
                    rho[i][j] = Some(r);
                    rho[j][i] = Some(r);
                    p[i][j] = Some(pv);
                    p[j][i] = Some(pv);
                }
                warnings.extend(warning);
            }
            for (what, cells) in [("rho", &rho), ("p", &p)] {
                let path = a
                    .out_dir
                    .join(format!("{mode}_{}_{what}.csv", tau_label(tau)));
                write(&path, &matrix_csv(&vars, cells))?;
                files.push(path.display().to_string());
            }
        }
    }
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    print!(
        "{}",
        to_json(
            &json!({ "command": "pairwise", "pairs": pairs.len(), "files": files, "warnings": warnings })
        )
    );
    Ok(())
}

fn emit_table(t: &Table, out: Option<&PathBuf>) -> CliResult<()> {
    print!("{}", t.to_aligned());
    if let Some(path) = out {
        write(path, &t.to_csv()?)?;
    }
    Ok(())
}

pub fn bench_reject(a: &RejectArgs) -> CliResult<()> {
    let c = check(&a.est)?;
    if a.replicates == 0 || a.n == 0 {
        return Err(CliError::Config(
            "--n and --replicates must be positive".into(),
        ));
    }
    if a.setting == Setting::Graph {
        return Err(CliError::Config(
            "use `bench graph` for the graph setting".into(),
        ));
    }
    let mut cfg = RejectionConfig::new(a.setting, a.n, a.replicates, a.est.seed);
    cfg.taus = c.taus;
    cfg.alpha = c.alpha;
    cfg.folds = c.folds;
    cfg.bandwidth = a.est.bandwidth.into();
    if let Some(spec) = &a.thetas {
        cfg.thetas = parse_f64_list(spec, "theta")?;
    }
    let points = run_rejection(&cfg)?;
    emit_table(&rejection_table(&points)?, a.out.as_ref())
}

pub fn bench_graph(a: &BenchGraphArgs) -> CliResult<()> {
    let c = check(&a.est)?;
    if a.replicates == 0 || a.n == 0 {
        return Err(CliError::Config(
            "--n and --replicates must be positive".into(),
        ));
    }
    let mut backends = Vec::new();
    for b in a.backend.iter().unique() {
        match b {
            BackendArg::Quacc => backends.extend(c.taus.iter().map(|&tau| Backend::Quacc { tau })),
            BackendArg::Pcorr => backends.push(Backend::PartialCorrelation),
        }
    }
    let mut cfg = GraphConfig::new(a.n, a.replicates, backends, a.est.seed);
    cfg.alpha = c.alpha;
    cfg.folds = c.folds;
    cfg.bandwidth = a.est.bandwidth.into();
    cfg.with_mean_effects = a.mean_effects;
    cfg.max_order = a.max_order;
    let records = run_graph(&cfg)?;
    if let Some(path) = &a.records {
        write(path, &to_json(&records))?;
    }
    emit_table(&graph_table(a.n, &records)?, a.out.as_ref())
}

#[derive(Serialize)]
struct Sidecar {
    spec: DgpSpec,
    truth: Option<TrueGraph>,
}

pub fn simulate(a: &SimulateArgs) -> CliResult<()> {
    if a.n == 0 {
        return Err(CliError::Config("--n must be positive".into()));
    }
    let mut rng = stream(a.seed, 0);
    let (data, sidecar) = match a.setting {
        Setting::Graph => {
            if a.theta.is_some() {
                return Err(CliError::Config(
                    "--theta applies to the pairwise settings only".into(),
                ));
            }
            let (data, truth, spec) = gen_graph(a.n, a.mean_effects, &mut rng)?;
            (
                data,
                Sidecar {
                    spec: spec.with_seed(a.seed),
                    truth: Some(truth),
                },
            )
        }
        setting => {
            let mut spec = DgpSpec::pairwise(setting, a.n)?.with_seed(a.seed);
            if let Some(theta) = a.theta {
                spec = spec.with_theta(theta);
            }
            let data = gen_pairwise_with(&spec, &mut rng)?;
            (data, Sidecar { spec, truth: None })
        }
    };
    let mut csv = Vec::new();
    data.write_csv(&mut csv)?;
    write(
        &a.out,
        &String::from_utf8(csv).expect("csv output is UTF-8"),
    )?;
    let side = a.out.with_extension("json");
    write(&side, &to_json(&sidecar))?;
    print!(
        "{}",
        to_json(&json!({
            "command": "simulate",
            "rows": data.n_rows(),
            "csv": a.out.display().to_string(),
            "sidecar": side.display().to_string(),
        }))
    );
    Ok(())
}
