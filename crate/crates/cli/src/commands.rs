use std::path::Path;

use concept_geometry::concepts::{
    estimate_direction, loo_directions, project_pairs, quantile, random_pair_projections,
    ConceptDirection,
};
use concept_geometry::intervene::{alpha_grid, logit_trajectory, topk_after_intervention};
use concept_geometry::metric::{heatmap, MetricContext, MetricKind};
use concept_geometry::model_io::{
    encode_matrix, load_concept_pairs, load_embedding_set, load_labels, load_quadruples,
    load_unembeddings, ConceptPairSet, EmbeddingSet, MatrixKind, UnembeddingMatrix,
};
use concept_geometry::probe::{probe_report, probe_score};
use concept_geometry::synthetic::{verify_report, SyntheticModel, SyntheticSpec, VerifyThresholds};
use nalgebra::DMatrix;

use crate::args::{
    EstimateArgs, HeatmapArgs, InterveneArgs, ModelArgs, ProbeArgs, SynthArgs, SynthExportArgs,
    SynthVerifyArgs,
};
use crate::output::{ensure_dir, fmt_num, heatmap_svg, write_atomic, Table};
use crate::Failure;

struct Loaded {
    gamma: UnembeddingMatrix,
    pairs: Vec<ConceptPairSet>,
    mc: MetricContext,
}

fn load_model(args: &ModelArgs) -> Result<Loaded, Failure> {
    ensure_dir(&args.out)?;
    let gamma = load_unembeddings(&args.unembeddings)?;
    let pairs = load_concept_pairs(&args.pairs, gamma.vocab_size())?;
    let mc = MetricContext::from_unembeddings(&gamma, args.ridge)?;
    Ok(Loaded { gamma, pairs, mc })
}

fn directions(m: &Loaded) -> Result<Vec<ConceptDirection>, Failure> {
    Ok(m.pairs
        .iter()
        .map(|p| estimate_direction(&m.gamma, p, &m.mc))
        .collect::<Result<_, _>>()?)
}

fn save_rows(
    path: &Path,
    kind: MatrixKind,
    rows: &[&nalgebra::DVector<f64>],
) -> Result<(), Failure> {
    let d = rows.first().map_or(0, |r| r.len());
    let m = DMatrix::from_fn(rows.len(), d, |r, c| rows[r][c]);
    write_atomic(path, &encode_matrix(kind, &m)?)
}

pub fn estimate(args: &EstimateArgs) -> Result<(), Failure> {
    let m = load_model(&args.model)?;
    let dirs = directions(&m)?;
    let out = &args.model.out;

    save_rows(
        &out.join("directions.cgt"),
        MatrixKind::Unembedding,
        &dirs.iter().map(|d| &d.gamma_bar).collect::<Vec<_>>(),
    )?;
    save_rows(
        &out.join("lambdas.cgt"),
        MatrixKind::Embedding,
        &dirs.iter().map(|d| &d.lambda_bar).collect::<Vec<_>>(),
    )?;
    let names: String = dirs.iter().map(|d| format!("{}\n", d.name)).collect();
    write_atomic(&out.join("directions.txt"), names.as_bytes())?;

    let mut projections = Table::new(&["concept", "pair_index", "projection"]);
    let mut baseline = Table::new(&["concept", "sample_index", "projection"]);
    let mut summary = Table::new(&[
        "concept",
        "n_pairs",
        "raw_causal_norm",
        "loo_min",
        "loo_median",
        "loo_min_cosine",
        "baseline_p95",
        "fraction_above_p95",
        "note",
    ]);
    for (i, (pairs, dir)) in m.pairs.iter().zip(&dirs).enumerate() {
        let samples = random_pair_projections(
            &m.gamma,
            dir,
            args.baseline_samples,
            args.seed.wrapping_add(i as u64),
            &m.mc,
        )?;
        for (j, p) in samples.iter().enumerate() {
            baseline.row([dir.name.clone(), j.to_string(), fmt_num(*p)]);
        }
        let p95 = if samples.is_empty() {
            f64::NAN
        } else {
            quantile(&samples, 0.95)
        };
        let raw_norm = m.mc.norm(&dir.raw_mean)?;

        if pairs.len() < 2 {
            eprintln!(
                "warning: concept `{}` has a single pair; leave-one-out statistics skipped",
                dir.name
            );
            summary.row([
                dir.name.clone(),
                pairs.len().to_string(),
                fmt_num(raw_norm),
                String::new(),
                String::new(),
                String::new(),
                fmt_num(p95),
                String::new(),
                "single pair: no leave-one-out".into(),
            ]);
            continue;
        }
        let proj = project_pairs(&m.gamma, pairs, &m.mc)?;
        for (j, p) in proj.iter().enumerate() {
            projections.row([dir.name.clone(), j.to_string(), fmt_num(*p)]);
        }
        let loo_cos = loo_directions(&m.gamma, pairs, &m.mc)?
            .iter()
            .map(|l| m.mc.cosine(&l.gamma_bar, &dir.gamma_bar))
            .collect::<Result<Vec<_>, _>>()?;
        let above = proj.iter().filter(|&&p| p > p95).count() as f64 / proj.len() as f64;
        let min = proj.iter().cloned().fold(f64::INFINITY, f64::min);
        summary.row([
            dir.name.clone(),
            pairs.len().to_string(),
            fmt_num(raw_norm),
            fmt_num(min),
            fmt_num(quantile(&proj, 0.5)),
            fmt_num(loo_cos.iter().cloned().fold(f64::INFINITY, f64::min)),
            fmt_num(p95),
            fmt_num(above),
            String::new(),
        ]);
    }
    projections.save(&out.join("projections.csv"))?;
    baseline.save(&out.join("baseline.csv"))?;
    summary.save(&out.join("concepts.csv"))
}

fn square_table(names: &[String], values: &DMatrix<f64>) -> Table {
    let mut header = vec!["concept"];
    header.extend(names.iter().map(String::as_str));
    let mut t = Table::new(&header);
    for (i, name) in names.iter().enumerate() {
        let mut row = vec![name.clone()];
        row.extend(values.row(i).iter().map(|v| fmt_num(*v)));
        t.row(row);
    }
    t
}

pub fn heatmap_cmd(args: &HeatmapArgs) -> Result<(), Failure> {
    let m = load_model(&args.model)?;
    let dirs = directions(&m)?;
    let names: Vec<String> = dirs.iter().map(|d| d.name.clone()).collect();
    let out = &args.model.out;
    let causal = heatmap(&dirs, &m.mc, MetricKind::Causal)?;
    let euclidean = heatmap(&dirs, &m.mc, MetricKind::Euclidean)?;
    square_table(&names, &causal).save(&out.join("heatmap_causal.csv"))?;
    square_table(&names, &euclidean).save(&out.join("heatmap_euclidean.csv"))?;
    let (values, title) = match MetricKind::from(args.metric) {
        MetricKind::Causal => (&causal, "|causal inner product|"),
        MetricKind::Euclidean => (&euclidean, "|Euclidean inner product|"),
    };
    write_atomic(
        &out.join("heatmap.svg"),
        heatmap_svg(&names, values, title).as_bytes(),
    )
}

fn distinct_in_order(labels: &[String]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for l in labels {
        if !out.contains(l) {
            out.push(l.clone());
        }
    }
    out
}

pub fn probe(args: &ProbeArgs) -> Result<(), Failure> {
    let m = load_model(&args.model)?;
    let contexts = load_embedding_set(&args.contexts, Some(&args.labels))?;
    let dirs = directions(&m)?;
    let labels = contexts.labels().unwrap_or_default().to_vec();
    let out = &args.model.out;

    let mut scores = Table::new(&["context_index", "label", "concept", "score"]);
    for (c, lambda) in contexts.rows().enumerate() {
        for dir in &dirs {
            scores.row([
                c.to_string(),
                labels[c].clone(),
                dir.name.clone(),
                fmt_num(probe_score(dir, &lambda)?),
            ]);
        }
    }

    let groups = distinct_in_order(&labels);
    let sets: Vec<EmbeddingSet> = groups
        .iter()
        .map(|g| contexts.select_label(g))
        .collect::<Result<_, _>>()?;
    let mut auc = Table::new(&["concept", "label_a", "label_b", "n_a", "n_b", "auc"]);
    for dir in &dirs {
        for a in 0..groups.len() {
            for b in (a + 1)..groups.len() {
                let r = probe_report(dir, &sets[a], &sets[b])?;
                auc.row([
                    dir.name.clone(),
                    groups[a].clone(),
                    groups[b].clone(),
                    sets[a].len().to_string(),
                    sets[b].len().to_string(),
                    fmt_num(r.auc),
                ]);
            }
        }
    }
    scores.save(&out.join("probe_scores.csv"))?;
    auc.save(&out.join("probe_auc.csv"))
}

/// `start:step:stop` or `a,b,c`.
pub fn parse_alphas(spec: &str) -> Result<Vec<f64>, Failure> {
    let bad = |why: &str| Failure::input(format!("InvalidAlphaGrid: `{spec}`: {why}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad("not a number"));
    let grid = if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("expected start:step:stop"));
        }
        let (start, step, stop) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
            return Err(bad("need step > 0 and stop ≥ start"));
        }
        alpha_grid(start, step, stop)
    } else {
        spec.split(',').map(num).collect::<Result<Vec<_>, _>>()?
    };
    if grid.is_empty() || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(bad("grid must be non-empty and strictly ascending"));
    }
    Ok(grid)
}

pub fn intervene_cmd(args: &InterveneArgs) -> Result<(), Failure> {
    let alphas = parse_alphas(&args.alphas)?;
    let m = load_model(&args.model)?;
    let contexts = load_embedding_set(&args.contexts, None)?;
    let labels = args.labels.as_deref().map(load_labels).transpose()?;
    let contexts = EmbeddingSet::new(contexts.matrix().clone(), labels)?;
    let quads = load_quadruples(&args.quads, m.gamma.vocab_size())?;
    let dirs = directions(&m)?;
    let find = |name: &str| {
        dirs.iter().find(|d| d.name == name).ok_or_else(|| {
            Failure::input(format!(
                "UnknownConcept: `{name}` is named by a quadruple but not in the pairs file"
            ))
        })
    };

    let mut traj = Table::new(&[
        "quad",
        "concept",
        "context",
        "alpha",
        "alpha_causal",
        "target_logit",
        "offtarget_logit",
    ]);
    let mut topk = Table::new(&[
        "quad", "concept", "context", "alpha", "rank", "token_id", "logit",
    ]);
    for quad in &quads {
        let w = find(&quad.names.0)?;
        find(&quad.names.1)?;
        let tag = quad.to_string();
        // contexts written for this quadruple, or all of them
        let rows: Vec<usize> = match contexts.labels() {
            Some(l) if l.contains(&tag) => (0..contexts.len()).filter(|&i| l[i] == tag).collect(),
            _ => (0..contexts.len()).collect(),
        };
        let subset = EmbeddingSet::from_rows(
            &rows.iter().map(|&i| contexts.row(i)).collect::<Vec<_>>(),
            contexts.dim(),
            None,
        )?;
        for dir in &dirs {
            let report = logit_trajectory(&subset, quad, dir, &m.gamma, &alphas)?;
            let norm = m.mc.norm(&dir.gamma_bar)?;
            for (j, &ctx) in rows.iter().enumerate() {
                for (a, &alpha) in alphas.iter().enumerate() {
                    traj.row([
                        tag.clone(),
                        dir.name.clone(),
                        ctx.to_string(),
                        fmt_num(alpha),
                        fmt_num(alpha * norm),
                        fmt_num(report.target_logits[j][a]),
                        fmt_num(report.offtarget_logits[j][a]),
                    ]);
                }
            }
        }
        for &ctx in &rows {
            let lambda = contexts.row(ctx);
            for &alpha in &alphas {
                let top = topk_after_intervention(&m.gamma, &lambda, w, alpha, args.k)?;
                for (rank, (id, logit)) in top.iter().enumerate() {
                    topk.row([
                        tag.clone(),
                        w.name.clone(),
                        ctx.to_string(),
                        fmt_num(alpha),
                        (rank + 1).to_string(),
                        id.to_string(),
                        fmt_num(*logit),
                    ]);
                }
            }
        }
    }
    let out = &args.model.out;
    traj.save(&out.join("trajectories.csv"))?;
    topk.save(&out.join("topk.csv"))
}

fn build_model(args: &SynthArgs) -> Result<SyntheticModel, Failure> {
    Ok(SyntheticModel::build(SyntheticSpec {
        dim: args.d,
        concepts: args.k_concepts,
        vocab_per_cell: args.per_cell,
        noise_sigma: args.noise,
        seed: args.seed,
        ..SyntheticSpec::default()
    })?)
}

/// Returns whether every check passed; the report is written either way.
pub fn synth_verify(args: &SynthVerifyArgs) -> Result<bool, Failure> {
    ensure_dir(&args.out)?;
    let model = build_model(&args.synth)?;
    let mc = MetricContext::from_unembeddings(&model.gamma, args.ridge)?;
    let report = verify_report(&model, &mc)?;
    let thresholds = VerifyThresholds::for_run(args.synth.noise, args.ridge);
    let checks = report.checks(&thresholds);
    let mut table = Table::new(&["check", "value", "relation", "threshold", "pass"]);
    for c in &checks {
        table.row([
            c.name.clone(),
            fmt_num(c.value),
            c.relation.to_string(),
            fmt_num(c.threshold),
            c.pass.to_string(),
        ]);
    }
    table.save(&args.out.join("verify_report.csv"))?;
    let failed: Vec<_> = checks.iter().filter(|c| !c.pass).collect();
    for c in &failed {
        eprintln!(
            "check failed: {} = {} (want {} {})",
            c.name,
            fmt_num(c.value),
            c.relation,
            fmt_num(c.threshold)
        );
    }
    Ok(failed.is_empty())
}

pub fn synth_export(args: &SynthExportArgs) -> Result<(), Failure> {
    ensure_dir(&args.out)?;
    build_model(&args.synth)?.export(&args.out)?;
    Ok(())
}
