//! Subcommand implementations and artifact writing.

use std::fs;
use std::path::Path;
use std::time::Instant;

use amgcl::eval::{BenchRow, BenchSize, EvalReport, ProbeAccuracy};
use amgcl::ingest::{read_matrix_tsv, write_matrix_tsv};
use amgcl::precoder::propagate_traced;
use amgcl::{
    apply_mask, classify_probe, load_dataset, make_split, ranked_metrics, save_checkpoint,
    selfcheck, Dataset, Error, ProbeConfig, Result, Split, TrainOutput, Variant,
};
use ndarray::Array2;

use crate::config::{BenchArgs, EvalArgs, RunConfig};

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source: e,
    }
}

fn ensure_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn write_config_echo(cfg: &RunConfig) -> Result<()> {
    let path = cfg.output_dir.join("run_config.json");
    let json = serde_json::to_string_pretty(cfg).expect("config serializes");
    write_text(&path, &json)
}

fn rows_of(matrix: &Array2<f64>, nodes: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((nodes.len(), matrix.ncols()));
    for (row, &node) in nodes.iter().enumerate() {
        out.row_mut(row).assign(&matrix.row(node));
    }
    out
}

/// Ranking metrics of `scores` against the true attribute rows of the
/// held-out test nodes. With nothing held out there is nothing to rank and
/// the metric maps stay empty.
fn imputation_metrics(
    dataset: &Dataset,
    split: &Split,
    scores: &Array2<f64>,
    ks: &[usize],
) -> Result<amgcl::eval::RankedMetrics> {
    let test_nodes = split.missing_test();
    if test_nodes.is_empty() {
        return Ok(amgcl::eval::RankedMetrics {
            recall: Default::default(),
            ndcg: Default::default(),
            skipped_rows: 0,
            evaluated_rows: 0,
        });
    }
    let score_rows = rows_of(scores, test_nodes);
    let truth_rows = rows_of(dataset.features.values(), test_nodes);
    ranked_metrics(score_rows.view(), truth_rows.view(), ks)
}

fn probe_both_paths(
    dataset: &Dataset,
    split: &Split,
    cfg: &RunConfig,
    out: &TrainOutput,
) -> Result<Vec<ProbeAccuracy>> {
    let Some(labels) = &dataset.labels else {
        return Ok(Vec::new());
    };
    if !cfg.probe {
        return Ok(Vec::new());
    }
    let target = split.missing_nodes();
    let probe_cfg = ProbeConfig {
        seed: cfg.train.seed,
        ..Default::default()
    };
    if target.len() < probe_cfg.folds || dataset.num_classes < 2 {
        return Ok(Vec::new());
    }
    let embed_folds = classify_probe(
        &out.embedding,
        &dataset.graph,
        labels,
        dataset.num_classes,
        &target,
        &probe_cfg,
    )?;
    let imputed_folds = classify_probe(
        out.imputed.values(),
        &dataset.graph,
        labels,
        dataset.num_classes,
        &target,
        &probe_cfg,
    )?;
    Ok(vec![
        ProbeAccuracy::from_folds("embedding", embed_folds),
        ProbeAccuracy::from_folds("imputed", imputed_folds),
    ])
}

pub fn cmd_precode(cfg: RunConfig) -> Result<()> {
    ensure_out_dir(&cfg.output_dir)?;
    let dataset = load_dataset(&cfg.dataset_dir)?;
    let split = make_split(&dataset, &cfg.mask)?;
    let masked = apply_mask(&dataset, &split)?;
    let adj = dataset.graph.normalized();
    let (precoded, energies) = propagate_traced(&masked, &adj, &cfg.precoder)?;

    write_matrix_tsv(cfg.output_dir.join("precoded.tsv"), precoded.values())?;
    let mut csv = String::from("iteration,energy\n");
    for (i, e) in energies.iter().enumerate() {
        csv.push_str(&format!("{i},{e}\n"));
    }
    write_text(&cfg.output_dir.join("energy.csv"), &csv)?;
    write_config_echo(&cfg)?;

    let metrics = imputation_metrics(&dataset, &split, precoded.values(), &cfg.eval_ks)?;
    for (&k, recall) in &metrics.recall {
        println!(
            "precode {}: recall@{k} = {recall:.4}, ndcg@{k} = {:.4}",
            dataset.name, metrics.ndcg[&k]
        );
    }
    println!(
        "precoded {} nodes ({} iterations, final energy {:.6})",
        dataset.graph.num_nodes(),
        cfg.precoder.iterations,
        energies.last().copied().unwrap_or(0.0)
    );
    Ok(())
}

pub fn cmd_train(cfg: RunConfig) -> Result<()> {
    ensure_out_dir(&cfg.output_dir)?;
    let dataset = load_dataset(&cfg.dataset_dir)?;
    let split = make_split(&dataset, &cfg.mask)?;
    let started = Instant::now();
    let out = amgcl::train(&dataset, &split, &cfg.train, &cfg.precoder)?;

    let metrics = imputation_metrics(&dataset, &split, out.imputed.values(), &cfg.eval_ks)?;
    let classification = probe_both_paths(&dataset, &split, &cfg, &out)?;
    // Designated classification input: the full variant reads the embedding,
    // the star variant the reconstructed attributes.
    let designated = match cfg.train.variant {
        Variant::Full => "embedding",
        Variant::Star => "imputed",
    };
    let (accuracy_folds, accuracy_mean, extra): (Vec<f64>, f64, Vec<ProbeAccuracy>) = {
        let mut designated_probe = None;
        let mut extra = Vec::new();
        for probe in classification {
            if probe.input == designated && designated_probe.is_none() {
                designated_probe = Some(probe);
            } else {
                extra.push(probe);
            }
        }
        match designated_probe {
            Some(p) => (p.folds.clone(), p.mean, extra),
            None => (Vec::new(), 0.0, extra),
        }
    };

    let report = EvalReport {
        schema_version: EvalReport::SCHEMA_VERSION,
        method: cfg.train.variant.label().to_string(),
        dataset: dataset.name.clone(),
        recall_at: metrics.recall.clone(),
        ndcg_at: metrics.ndcg.clone(),
        skipped_rows: metrics.skipped_rows,
        accuracy_folds,
        accuracy_mean,
        extra_classification: extra,
        config_echo: serde_json::to_value(&cfg).expect("config serializes"),
        seed: cfg.train.seed,
        wall_time_s: started.elapsed().as_secs_f64(),
        param_count: out.model.param_count(),
    };
    report.validate()?;

    write_matrix_tsv(cfg.output_dir.join("imputed.tsv"), out.imputed.values())?;
    write_matrix_tsv(cfg.output_dir.join("embedding.tsv"), &out.embedding)?;
    let mut history = String::from("epoch,loss,rec,fcl\n");
    for s in &out.history {
        history.push_str(&format!("{},{},{},{}\n", s.epoch, s.loss, s.rec, s.fcl));
    }
    write_text(&cfg.output_dir.join("history.csv"), &history)?;
    let ckpt_path = cfg.output_dir.join("checkpoint.txt");
    let file = fs::File::create(&ckpt_path).map_err(|e| io_err(&ckpt_path, e))?;
    save_checkpoint(std::io::BufWriter::new(file), &out.model, &cfg.train)
        .map_err(|e| io_err(&ckpt_path, e))?;
    write_text(&cfg.output_dir.join("report.json"), &report.to_json_pretty())?;
    write_config_echo(&cfg)?;

    println!(
        "{} on {}: {} epochs in {:.1}s ({} params)",
        report.method,
        report.dataset,
        out.history.len(),
        report.wall_time_s,
        report.param_count
    );
    for (&k, recall) in &report.recall_at {
        println!("  recall@{k} = {recall:.4}, ndcg@{k} = {:.4}", report.ndcg_at[&k]);
    }
    if !report.accuracy_folds.is_empty() {
        println!(
            "  classification ({designated}): mean accuracy {:.4}",
            report.accuracy_mean
        );
    }
    Ok(())
}

pub fn cmd_eval(args: EvalArgs) -> Result<()> {
    let cfg = crate::config::resolve(args.common)?;
    ensure_out_dir(&cfg.output_dir)?;
    let dataset = load_dataset(&cfg.dataset_dir)?;
    let split = make_split(&dataset, &cfg.mask)?;
    let scores = read_matrix_tsv(&args.features)?;
    if scores.shape() != dataset.features.values().shape() {
        return Err(Error::ShapeMismatch {
            op: "eval",
            left: dataset.features.values().shape().to_vec(),
            right: scores.shape().to_vec(),
        });
    }
    let metrics = imputation_metrics(&dataset, &split, &scores, &cfg.eval_ks)?;

    let mut accuracy_folds = Vec::new();
    let mut extra = Vec::new();
    if let (Some(embedding_path), Some(labels), true) =
        (&args.embedding, &dataset.labels, cfg.probe)
    {
        let embedding = read_matrix_tsv(embedding_path)?;
        let probe_cfg = ProbeConfig {
            seed: cfg.train.seed,
            ..Default::default()
        };
        let folds = classify_probe(
            &embedding,
            &dataset.graph,
            labels,
            dataset.num_classes,
            &split.missing_nodes(),
            &probe_cfg,
        )?;
        let probe = ProbeAccuracy::from_folds("embedding", folds);
        accuracy_folds = probe.folds.clone();
        extra.push(probe);
    }
    let accuracy_mean = if accuracy_folds.is_empty() {
        0.0
    } else {
        accuracy_folds.iter().sum::<f64>() / accuracy_folds.len() as f64
    };

    let report = EvalReport {
        schema_version: EvalReport::SCHEMA_VERSION,
        method: "reeval".into(),
        dataset: dataset.name.clone(),
        recall_at: metrics.recall.clone(),
        ndcg_at: metrics.ndcg.clone(),
        skipped_rows: metrics.skipped_rows,
        accuracy_folds,
        accuracy_mean,
        extra_classification: extra,
        config_echo: serde_json::to_value(&cfg).expect("config serializes"),
        seed: cfg.mask.seed,
        wall_time_s: 0.0,
        param_count: 0,
    };
    report.validate()?;
    write_text(&cfg.output_dir.join("report.json"), &report.to_json_pretty())?;
    for (&k, recall) in &report.recall_at {
        println!("recall@{k} = {recall:.4}, ndcg@{k} = {:.4}", report.ndcg_at[&k]);
    }
    Ok(())
}

fn parse_sizes(raw: &str) -> Result<Vec<BenchSize>> {
    raw.split(',')
        .map(|triple| {
            let parts: Vec<&str> = triple.trim().split(':').collect();
            if parts.len() != 3 {
                return Err(Error::Config(format!(
                    "bench size must be nodes:edges:dim, got {triple:?}"
                )));
            }
            Ok(BenchSize {
                nodes: parts[0]
                    .parse()
                    .map_err(|e| Error::Config(format!("bad node count: {e}")))?,
                undirected_edges: parts[1]
                    .parse()
                    .map_err(|e| Error::Config(format!("bad edge count: {e}")))?,
                feature_dim: parts[2]
                    .parse()
                    .map_err(|e| Error::Config(format!("bad feature dim: {e}")))?,
            })
        })
        .collect()
}

pub fn cmd_bench(args: BenchArgs) -> Result<()> {
    let sizes = match &args.sizes {
        Some(raw) => parse_sizes(raw)?,
        None => vec![
            BenchSize { nodes: 1000, undirected_edges: 4000, feature_dim: 64 },
            BenchSize { nodes: 1000, undirected_edges: 8000, feature_dim: 64 },
            BenchSize { nodes: 1000, undirected_edges: 4000, feature_dim: 128 },
        ],
    };
    let rows = amgcl::benchmark_scaling(&sizes, args.seed)?;
    println!("{:>8} {:>8} {:>6} {:>14}", "nodes", "edges", "dim", "sec/epoch");
    for BenchRow { size, seconds_per_epoch } in &rows {
        println!(
            "{:>8} {:>8} {:>6} {:>14.4}",
            size.nodes, size.undirected_edges, size.feature_dim, seconds_per_epoch
        );
    }
    let exponents = amgcl::eval::scaling_exponents(&rows);
    for e in &exponents {
        println!(
            "empirical exponent in {}: {:.2} ({} -> {})",
            e.axis,
            e.exponent,
            match e.axis {
                "nodes" => e.from.nodes,
                "edges" => e.from.undirected_edges,
                _ => e.from.feature_dim,
            },
            match e.axis {
                "nodes" => e.to.nodes,
                "edges" => e.to.undirected_edges,
                _ => e.to.feature_dim,
            }
        );
    }
    if let Some(dir) = &args.out {
        ensure_out_dir(dir)?;
        let json = serde_json::json!({ "rows": rows, "exponents": exponents });
        write_text(
            &dir.join("bench.json"),
            &serde_json::to_string_pretty(&json).expect("rows serialize"),
        )?;
    }
    Ok(())
}

pub fn cmd_selfcheck() -> Result<()> {
    let checks = selfcheck::run_all();
    let mut failures = 0usize;
    for check in &checks {
        let status = if check.passed { "PASS" } else { "FAIL" };
        println!("{status} {}: {}", check.name, check.detail);
        if !check.passed {
            failures += 1;
        }
    }
    if failures > 0 {
        return Err(Error::Invalid(format!("{failures} selfcheck(s) failed")));
    }
    println!("all {} checks passed", checks.len());
    Ok(())
}
