use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use super::manifest::{sidecar, RunManifest};
use super::*;
use crate::analysis::{self, beta_csv, beta_stats, mre_csv, mre_experiment, recommend_representation, theta, AnalysisError};
use crate::batching::BatchConfig;
use crate::redundancy::{
    apply_plan, build_coverage, default_label, format_terms, mr_generate, pascal_generate, plan_recovery, spans_check,
    stored_sums, NodeRecovery, PartitionScheme, RecoveryStatus, RedundancyError, Source,
};
use crate::simnet::{self, Failure, FailureScript, SimConfig, SimError, SimReport};
use crate::sketch::{FlowId, Sketch, SketchParams};
use crate::trace::{read_trace, write_trace, zipf_trace, TraceError};

type Result<T> = std::result::Result<T, CliError>;

impl From<TraceError> for CliError {
    fn from(e: TraceError) -> Self {
        match e {
            TraceError::Io(e) => CliError::Io(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(_) => CliError::Usage(e.to_string()),
            other => CliError::Domain(other.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Params(_) | AnalysisError::Sketch(_) => CliError::Usage(e.to_string()),
            other => CliError::Domain(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn write_file(path: &Path, data: &str) -> Result<()> {
    std::fs::write(path, data).map_err(|e| io_err(path, e))
}

fn write_manifest(m: &RunManifest, path: &Path) -> Result<()> {
    m.write(path).map_err(|e| io_err(path, e))
}

fn load_trace(path: &Path) -> Result<(u32, Vec<FlowId>)> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    read_trace(BufReader::new(f)).map_err(|e| match e {
        TraceError::Io(e) => io_err(path, e),
        other => CliError::Usage(format!("{}: {other}", path.display())),
    })
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))
}

pub fn dispatch(cli: Cli, raw: &[String]) -> Result<()> {
    let jobs = cli.jobs;
    match cli.cmd {
        Command::GenTrace(a) => gen_trace(a, raw),
        Command::Matrix(a) => matrix(a, raw),
        Command::Simulate(a) => simulate(a, jobs, raw),
        Command::RecoverDemo(a) => recover_demo(a, raw),
        Command::Beta(a) => beta(a, jobs, raw),
        Command::Mre(a) => mre(a, jobs, raw),
    }
}

fn gen_trace(a: GenTraceArgs, raw: &[String]) -> Result<()> {
    let t0 = Instant::now();
    let items = zipf_trace(a.flows, a.items, a.zipf, a.bits_mid, a.seed)?;
    let f = File::create(&a.out).map_err(|e| io_err(&a.out, e))?;
    write_trace(BufWriter::new(f), a.bits_mid, &items)?;
    let config = json!({"flows": a.flows, "items": a.items, "zipf": a.zipf, "bits_mid": a.bits_mid});
    let m = RunManifest::new("gen-trace", raw, config, a.seed).finish(t0, vec![a.out.clone()]);
    write_manifest(&m, &sidecar(&a.out))?;
    println!("wrote {} items over {} flows to {}", items.len(), a.flows, a.out.display());
    Ok(())
}

fn render(rows: &[Vec<i64>]) -> String {
    let width = rows.iter().flatten().map(|v| v.to_string().len()).max().unwrap_or(1);
    rows.iter()
        .map(|r| r.iter().map(|v| format!("{v:>width$}")).collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join("\n")
}

fn matrix(a: MatrixArgs, raw: &[String]) -> Result<()> {
    let t0 = Instant::now();
    let usage = |e: RedundancyError| CliError::Usage(e.to_string());
    let rows = if a.pascal {
        mr_generate(a.k, a.f).map_err(usage)?;
        let p = pascal_generate(a.k).ok_or_else(|| CliError::Usage(format!("Pascal matrix of order {} overflows", a.k)))?;
        p[..a.f].to_vec()
    } else {
        mr_generate(a.k, a.f).map_err(usage)?.rows
    };
    println!("{} k={} f={}", if a.pascal { "pascal" } else { "mr" }, a.k, a.f);
    println!("{}", render(&rows));
    let mut ok = true;
    if a.check {
        let dets = crate::redundancy::subset_determinants(&rows, a.f);
        for (cols, det) in &dets {
            let c: Vec<String> = cols.iter().map(|c| (c + 1).to_string()).collect();
            println!("det[{}] = {det}", c.join(","));
        }
        let values: Vec<String> = dets.iter().map(|(_, d)| d.to_string()).collect();
        println!("determinants: {}", values.join(","));
        ok = (1..=a.f).all(|g| spans_check(&rows, g));
        println!("spans: {}", if ok { "ok" } else { "FAIL" });
    }
    if let Some(path) = &a.manifest {
        let config = json!({"k": a.k, "f": a.f, "pascal": a.pascal, "check": a.check});
        write_manifest(&RunManifest::new("matrix", raw, config, 0).finish(t0, vec![]), path)?;
    }
    if ok {
        Ok(())
    } else {
        Err(CliError::Domain("some column subset is singular".into()))
    }
}

fn load_failures(path: &Path) -> Result<FailureScript> {
    let s = read_to_string(path)?;
    serde_json::from_str::<FailureScript>(&s)
        .or_else(|_| serde_json::from_str::<Vec<Failure>>(&s).map(|failures| FailureScript { failures }))
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn write_report(dir: &Path, r: &SimReport) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let json = dir.join("report.json");
    let csv = dir.join("report.csv");
    write_file(&json, &r.to_json())?;
    write_file(&csv, &r.to_csv())?;
    Ok(vec![json, csv])
}

fn simulate(a: SimulateArgs, jobs: usize, raw: &[String]) -> Result<()> {
    let t0 = Instant::now();
    let text = read_to_string(&a.config)?;
    let mut cfg: SimConfig =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", a.config.display())))?;
    let (bits, trace) = load_trace(&a.trace)?;
    cfg.batch.bits_mid = bits;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(c) = a.cycles {
        cfg.cycles = c;
    }
    if let Some(c) = a.capacity {
        cfg.batch.capacity = c;
    }
    if let Some(r) = a.representation {
        cfg.batch.representation = r;
    }
    if let Some(p) = a.policy {
        cfg.batch.policy = p;
    }
    let script = match &a.failures {
        Some(p) => load_failures(p)?,
        None => FailureScript::none(),
    };
    let runs: Vec<(PathBuf, SimConfig)> = if a.sweep.is_empty() {
        vec![(a.out.clone(), cfg.clone())]
    } else {
        a.sweep
            .iter()
            .map(|&rep| {
                let mut c = cfg.clone();
                c.batch.representation = rep;
                (a.out.join(rep.name()), c)
            })
            .collect()
    };
    let results: Vec<std::result::Result<SimReport, SimError>> =
        pool(jobs)?.install(|| runs.par_iter().map(|(_, c)| simnet::run(c, &trace, &script)).collect());
    let mut outputs = Vec::new();
    let mut problems = Vec::new();
    for ((dir, c), res) in runs.iter().zip(results) {
        let r = res?;
        outputs.extend(write_report(dir, &r)?);
        println!(
            "{}: items={} cycles={} traffic_bits={} failures={} lost={:?} verified={} digest={}",
            c.batch.representation,
            r.items,
            r.cycles.len(),
            r.total_traffic_bits(),
            r.failures.len(),
            r.lost,
            r.verified(),
            r.final_sum_digest,
        );
        for f in &r.failures {
            let status = f.status.map_or("redundant".to_string(), |s| format!("{s:?}").to_lowercase());
            println!("  node {} cycle {}: {status} verified={}", f.node, f.cycle, f.verified);
        }
        if r.any_unrecoverable() && !a.allow_loss {
            problems.push(format!("{}: unrecoverable nodes {:?}", c.batch.representation, r.lost));
        }
        if !r.verified() {
            problems.push(format!("{}: verification failed", c.batch.representation));
        }
    }
    std::fs::create_dir_all(&a.out).map_err(|e| io_err(&a.out, e))?;
    let manifest_path = a.out.join("manifest.json");
    outputs.push(manifest_path.clone());
    let config = json!({
        "sim": cfg,
        "failures": script,
        "sweep": a.sweep,
        "allow_loss": a.allow_loss,
        "trace": a.trace,
    });
    write_manifest(&RunManifest::new("simulate", raw, config, cfg.seed).finish(t0, outputs), &manifest_path)?;
    if problems.is_empty() {
        Ok(())
    } else {
        Err(CliError::Domain(problems.join("; ")))
    }
}

fn parse_node(s: &str, k: usize, f: usize) -> Result<usize> {
    let bad = || CliError::Usage(format!("bad node {s:?}"));
    let num = |t: &str| t.parse::<usize>().map_err(|_| bad());
    let node = if let Some(t) = s.strip_prefix('D').or_else(|| s.strip_prefix('d')) {
        let j = num(t)?;
        if j == 0 || j > k {
            return Err(bad());
        }
        j - 1
    } else if let Some(t) = s.strip_prefix('R').or_else(|| s.strip_prefix('r')) {
        let i = num(t)?;
        if i == 0 || i > f {
            return Err(bad());
        }
        k + i - 1
    } else {
        num(s)?
    };
    Ok(node)
}

fn random_data(params: SketchParams, k: usize, items: usize, seed: u64) -> Result<Vec<Sketch>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..k)
        .map(|_| {
            let mut s = Sketch::new(params).map_err(|e| CliError::Usage(e.to_string()))?;
            for _ in 0..items {
                let id = FlowId::from_u64(rng.gen_range(0..1000), 64).expect("64-bit id");
                s.update(&id, 1).map_err(|e| CliError::Domain(e.to_string()))?;
            }
            Ok(s)
        })
        .collect()
}

fn recover_demo(a: RecoverDemoArgs, raw: &[String]) -> Result<()> {
    let t0 = Instant::now();
    let usage = |e: RedundancyError| CliError::Usage(e.to_string());
    let scheme = PartitionScheme::new(a.partition, a.p, a.d, a.w).map_err(usage)?;
    let m = build_coverage(a.mapping, a.k, a.f)
        .and_then(|m| m.for_scheme(&scheme))
        .map_err(usage)?;
    let nodes = m.node_count();
    let failed: BTreeSet<usize> = a
        .failed
        .iter()
        .map(|s| parse_node(s, a.k, a.f))
        .collect::<Result<_>>()?;
    if let Some(&n) = failed.iter().find(|&&n| n >= nodes) {
        return Err(CliError::Usage(format!("node {n} does not exist ({nodes} nodes)")));
    }
    let plan = plan_recovery(&m, &failed);
    let label = default_label(&m);
    for pp in &plan.partitions {
        for (&j, rec) in &pp.nodes {
            let name = if m.p == 1 {
                format!("D{}", j + 1)
            } else {
                format!("D{}[{}]", j + 1, pp.partition)
            };
            match rec {
                NodeRecovery::Exact(terms) => println!("{name} = {}", format_terms(terms, &label)),
                NodeRecovery::Semi(bounds) => {
                    let parts: Vec<String> = bounds
                        .iter()
                        .map(|b| format!("floor(({}) / {})", format_terms(&b.terms, &label), b.divisor))
                        .collect();
                    println!("{name} <= min({})", parts.join(", "));
                }
                NodeRecovery::Unrecoverable => println!("{name}: unrecoverable"),
            }
        }
    }
    for &v in &plan.rebuild {
        println!("rebuild {}", m.label(v));
    }
    let status = plan.status();
    println!("status: {}", format!("{status:?}").to_lowercase());
    let mut verified = None;
    if a.verify_items > 0 && status != RecoveryStatus::Unrecoverable {
        let params = SketchParams::with_dims(a.d, a.w, a.seed).map_err(|e| CliError::Usage(e.to_string()))?;
        let data = random_data(params, a.k, a.verify_items, a.seed)?;
        let sums = stored_sums(&m, &scheme, &data).map_err(|e| CliError::Domain(e.to_string()))?;
        let fetch = |s: Source| match s {
            Source::Data(j) if !failed.contains(&j) => data.get(j),
            Source::Redundant(v) if !failed.contains(&m.vectors[v].holder) => sums.get(v),
            _ => None,
        };
        let out = apply_plan(&m, &scheme, &plan, &fetch, &data[0]).map_err(|e| CliError::Domain(e.to_string()))?;
        let ok = out.iter().all(|(&j, r)| match r.status {
            RecoveryStatus::Exact => r.sketch.counts() == data[j].counts(),
            _ => r.sketch.counts().iter().zip(data[j].counts()).all(|(x, y)| x >= y),
        });
        println!("verify: {}", if ok { "ok" } else { "FAIL" });
        verified = Some(ok);
    }
    if let Some(path) = &a.manifest {
        let config = json!({
            "k": a.k, "f": a.f, "mapping": a.mapping, "partition": a.partition, "p": a.p,
            "failed": failed, "verify_items": a.verify_items, "d": a.d, "w": a.w,
        });
        write_manifest(&RunManifest::new("recover-demo", raw, config, a.seed).finish(t0, vec![]), path)?;
    }
    if verified == Some(false) {
        return Err(CliError::Domain("recovered sketches do not match".into()));
    }
    if status == RecoveryStatus::Unrecoverable {
        return Err(CliError::Domain("some failed node is unrecoverable".into()));
    }
    Ok(())
}

fn beta(a: BetaArgs, jobs: usize, raw: &[String]) -> Result<()> {
    let t0 = Instant::now();
    let (bits, trace) = load_trace(&a.trace)?;
    let bits_mid = a.bits_mid.unwrap_or(bits);
    if !(a.alpha > 0.0 && a.alpha <= 1.0) {
        return Err(CliError::Usage("alpha must be in (0, 1]".into()));
    }
    let name = a.trace.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
    let stats: Vec<analysis::BetaStats> = pool(jobs)?.install(|| {
        a.capacities
            .par_iter()
            .map(|&b| beta_stats(&name, &trace, b))
            .collect::<std::result::Result<_, _>>()
    })?;
    let mut recs = Vec::new();
    for s in &stats {
        let th = theta(bits_mid, BatchConfig::new(s.capacity, Policy::Incremental, RepKind::FlwHash).bits_b());
        let rec = recommend_representation(s, th, a.alpha);
        println!(
            "B={} beta_avg={:.4} theta={} -> {}",
            s.capacity,
            s.beta_avg,
            th,
            serde_json::to_string(&rec).expect("serializable")
        );
        recs.push(json!({"B": s.capacity, "theta": th.to_string(), "recommendation": rec}));
    }
    write_file(&a.out, &beta_csv(&stats))?;
    let config = json!({
        "trace": a.trace, "B": a.capacities, "alpha": a.alpha, "bits_mid": bits_mid, "recommendations": recs,
    });
    write_manifest(&RunManifest::new("beta", raw, config, 0).finish(t0, vec![a.out.clone()]), &sidecar(&a.out))?;
    Ok(())
}

fn mre(a: MreArgs, jobs: usize, raw: &[String]) -> Result<()> {
    let t0 = Instant::now();
    let (_, trace) = load_trace(&a.trace)?;
    let params = SketchParams::from_accuracy(a.epsilon, a.delta, a.seed).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut points = Vec::new();
    for &b in &a.capacities {
        for &fa in &a.fail_at {
            for &pt in &a.point {
                points.push((b, fa, pt));
            }
        }
    }
    let reports: Vec<analysis::MreReport> = pool(jobs)?.install(|| {
        points
            .par_iter()
            .map(|&(b, fa, pt)| mre_experiment(&trace, b, params, fa, pt))
            .collect::<std::result::Result<_, _>>()
    })?;
    for r in &reports {
        println!(
            "B={} fail_at={} point={} mre(c+B)={:.6} mre(c)={:.6} violations={}",
            r.capacity, r.fail_at, r.point, r.mre_plus_b_nonfailed, r.mre_backup_nonfailed, r.one_sided_violations
        );
    }
    write_file(&a.out, &mre_csv(&reports))?;
    let config = json!({
        "trace": a.trace, "B": a.capacities, "fail_at": a.fail_at, "point": a.point,
        "epsilon": a.epsilon, "delta": a.delta, "d": params.d, "w": params.w,
    });
    write_manifest(&RunManifest::new("mre", raw, config, a.seed).finish(t0, vec![a.out.clone()]), &sidecar(&a.out))?;
    if reports.iter().any(|r| r.one_sided_violations > 0) {
        return Err(CliError::Domain("backup plus B underestimated some flow".into()));
    }
    Ok(())
}
