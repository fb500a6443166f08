use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use socialformer::export::{
    read_edge_list, write_adjacency_pgm, write_edge_list, write_graph_stats, write_losses,
    write_matrix_csv, write_matrix_pgm, write_metrics, write_partition_jsonl, write_sweep,
    SweepRow,
};
use socialformer::model::{
    grad_check, read_checkpoint, write_checkpoint, GradCheckConfig, ModelParams,
};
use socialformer::partition::{partition, PartitionMode};
use socialformer::pipeline::{pair_seed, pattern_set, sample_graph, sparsity_sweep};
use socialformer::ranking::{
    candidates_from_qrels, generate, mrr_at_k, ndcg_at_k, read_run, rerank_all, synthetic_document,
    train, write_run, Candidates, Collection,
};
use socialformer::sampler::{graph_sparsity, graph_stats};
use socialformer::text::{
    build_vocab, load_corpus, load_qrels, load_queries, IdentityRefiner, Qrels,
};
use socialformer::{Error, Result};

use crate::config::RunConfig;

/// Maximum relative error accepted by `grad-check`.
pub const GRAD_CHECK_TOLERANCE: f64 = 1e-4;

const SWEEP_QUERY: [&str; 3] = ["kelavo", "sumira", "tondepa"];

pub struct Context {
    pub config: RunConfig,
    pub out: PathBuf,
}

fn required<'a>(value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| Error::InvalidConfig(format!("`{key}` is not set in the config")))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    std::fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

impl Context {
    fn seed(&self) -> u64 {
        self.config.seed
    }

    fn collection(&self) -> Result<Collection> {
        let max = self.config.patterns.max_doc_len;
        let corpus = load_corpus(required(&self.config.corpus, "corpus")?, max)?;
        let queries = load_queries(required(&self.config.queries, "queries")?, max)?;
        Collection::new(corpus, queries)
    }

    fn qrels(&self) -> Result<Qrels> {
        load_qrels(required(&self.config.qrels, "qrels")?)
    }

    /// Candidates from the configured run file, or every judged document.
    fn candidates(&self, qrels: Option<&Qrels>) -> Result<Candidates> {
        match (&self.config.candidates, qrels) {
            (Some(path), _) => Ok(read_run(path)?
                .into_iter()
                .map(|(q, entries)| (q, entries.into_iter().map(|e| e.doc_id).collect()))
                .collect()),
            (None, Some(qrels)) => Ok(candidates_from_qrels(qrels)),
            (None, None) => Ok(candidates_from_qrels(&self.qrels()?)),
        }
    }

    fn write(
        &self,
        name: &str,
        f: impl FnOnce(&mut BufWriter<File>) -> Result<()>,
    ) -> Result<PathBuf> {
        let mut w = create(&self.out, name)?;
        f(&mut w)?;
        w.flush()?;
        let path = self.out.join(name);
        info!("wrote {}", path.display());
        Ok(path)
    }
}

/// Pattern heatmaps, the scaled matrix, and the sampled graph of one
/// (document, query) pair. `all` adds CSVs of every pattern, the adjacency
/// heatmap and graph statistics.
pub fn build_graph(ctx: &Context, doc_id: &str, query_id: &str, all: bool) -> Result<()> {
    let coll = ctx.collection()?;
    let doc = coll.doc(doc_id)?;
    let query = coll.query(query_id)?;
    let cfg = &ctx.config.patterns;
    let seed = ctx.seed();
    let patterns = pattern_set(doc, query, &coll.vocab, cfg, &IdentityRefiner)?;
    let art = sample_graph(&patterns, cfg, pair_seed(seed, query_id, doc_id))?;
    let names = ["p_sd", "p_sc", "p_dd", "p_dc"];
    for (name, p) in names.iter().zip(patterns.as_array()) {
        ctx.write(&format!("{name}.pgm"), |w| write_matrix_pgm(w, p, seed))?;
        if all {
            ctx.write(&format!("{name}.csv"), |w| write_matrix_csv(w, p, seed))?;
        }
    }
    ctx.write("p_scaled.csv", |w| write_matrix_csv(w, &art.scaled, seed))?;
    ctx.write("edges.txt", |w| write_edge_list(w, &art.graph))?;
    if all {
        ctx.write("p_combined.csv", |w| {
            write_matrix_csv(w, &art.combined, seed)
        })?;
        ctx.write("adjacency.pgm", |w| write_adjacency_pgm(w, &art.graph))?;
        ctx.write("graph_stats.csv", |w| {
            write_graph_stats(w, &[graph_stats(&art.graph)], seed)
        })?;
    }
    let stats = graph_stats(&art.graph);
    println!(
        "nodes={} edges={} sparsity={:.6} mu={:.6e}",
        art.graph.num_nodes, stats.num_edges, stats.sparsity, art.mu
    );
    if art.budget_unreachable {
        log::warn!("sparsity target unreachable; every probability is saturated");
    }
    Ok(())
}

pub fn partition_graph(
    ctx: &Context,
    graph: &Path,
    k: Option<usize>,
    mode: Option<PartitionMode>,
) -> Result<()> {
    let g = read_edge_list(graph)?;
    let mode = mode.unwrap_or(ctx.config.mode);
    let k = k.unwrap_or(ctx.config.max_subgraphs);
    let part = partition(&g, None, mode, k, ctx.config.cap)?;
    let seed = ctx.seed();
    ctx.write("partition.jsonl", |w| write_partition_jsonl(w, &part, seed))?;
    let rows = SweepRow::from_partition(graph_sparsity(&g), &part);
    ctx.write("partition_stats.csv", |w| write_sweep(w, &rows, seed))?;
    let covered: usize = part.subgraphs.iter().map(|s| s.members.len()).sum();
    println!(
        "mode={mode} subgraphs={} member_slots={covered}",
        part.len()
    );
    Ok(())
}

pub fn sweep(ctx: &Context, levels: Option<Vec<f64>>, doc: Option<(String, String)>) -> Result<()> {
    let c = &ctx.config;
    let levels = levels.unwrap_or_else(|| c.sweep_levels.clone());
    let seeds: Vec<u64> = (0..c.sweep_seeds as u64)
        .map(|i| c.seed.wrapping_add(i))
        .collect();
    let modes = [PartitionMode::NodeLevel, PartitionMode::EdgeLevel];
    let rows = match doc {
        Some((doc_id, query_id)) => {
            let coll = ctx.collection()?;
            sparsity_sweep(
                coll.doc(&doc_id)?,
                coll.query(&query_id)?,
                &coll.vocab,
                &c.pipeline(),
                &levels,
                &modes,
                &seeds,
            )?
        }
        None => {
            let (doc, query) = synthetic_document(c.sweep_doc_len, &SWEEP_QUERY, c.seed)?;
            let vocab = build_vocab([&doc])?;
            sparsity_sweep(&doc, &query, &vocab, &c.pipeline(), &levels, &modes, &seeds)?
        }
    };
    ctx.write("sweep.csv", |w| write_sweep(w, &rows, c.seed))?;
    for &level in &levels {
        for mode in modes {
            let total: f64 = rows
                .iter()
                .filter(|r| r.sparsity == level && r.mode == mode)
                .map(|r| r.num_nodes)
                .sum();
            println!("sparsity={level} mode={mode} top_nodes={total:.2}");
        }
    }
    Ok(())
}

pub fn train_model(ctx: &Context) -> Result<()> {
    let coll = ctx.collection()?;
    let qrels = ctx.qrels()?;
    let candidates = ctx.candidates(Some(&qrels))?;
    let initial = ModelParams::init(&ctx.config.model)?;
    let outcome = train(&coll, &qrels, &candidates, initial, &ctx.config.train())?;
    let seed = ctx.seed();
    std::fs::create_dir_all(&ctx.out)?;
    let ckpt = ctx.out.join("model.ckpt");
    write_checkpoint(&ckpt, &outcome.params)?;
    info!("wrote {}", ckpt.display());
    ctx.write("losses.csv", |w| write_losses(w, &outcome.losses, seed))?;
    let n = outcome.losses.len();
    let mean = outcome.losses.iter().map(|l| l.1).sum::<f64>() / n.max(1) as f64;
    println!("steps={n} mean_loss={mean:.6}");
    Ok(())
}

pub fn rerank(ctx: &Context, checkpoint: Option<PathBuf>) -> Result<()> {
    let path = match checkpoint {
        Some(p) => p,
        None => required(&ctx.config.checkpoint, "checkpoint")?.to_path_buf(),
    };
    let params = read_checkpoint(&path)?;
    let coll = ctx.collection()?;
    let candidates = ctx.candidates(None)?;
    let run = rerank_all(
        &params,
        &coll,
        &candidates,
        &ctx.config.pipeline(),
        ctx.seed(),
    )?;
    let seed = ctx.seed();
    ctx.write("run.txt", |w| {
        write_run(w, &run, "socialformer", &[format!("seed={seed}")])
    })?;
    println!("queries={}", run.len());
    Ok(())
}

pub fn eval(ctx: &Context, run: &Path) -> Result<()> {
    let run = read_run(run)?;
    let qrels = ctx.qrels()?;
    let c = &ctx.config;
    let metrics = [
        ("mrr", c.mrr_k, mrr_at_k(&run, &qrels, c.mrr_k)),
        ("ndcg", c.ndcg_k, ndcg_at_k(&run, &qrels, c.ndcg_k)),
    ];
    ctx.write("metrics.csv", |w| write_metrics(w, &metrics, c.seed))?;
    for (name, k, value) in metrics {
        println!("{name}@{k} {value:.6}");
    }
    Ok(())
}

/// Returns whether every seed stayed below the tolerance.
pub fn grad_check_seeds(ctx: &Context, seeds: usize) -> Result<bool> {
    let config = GradCheckConfig::default();
    let reports = (0..seeds as u64)
        .map(|i| grad_check(&config, ctx.seed().wrapping_add(i)))
        .collect::<Result<Vec<_>>>()?;
    let seed = ctx.seed();
    ctx.write("grad_check.csv", |w| {
        writeln!(w, "# seed={seed}")?;
        writeln!(w, "seed,num_params,max_rel_error,worst_param")?;
        for r in &reports {
            writeln!(
                w,
                "{},{},{:.3e},{}",
                r.seed, r.num_params, r.max_rel_error, r.worst_param
            )?;
        }
        Ok(())
    })?;
    let mut ok = true;
    for r in &reports {
        let pass = r.max_rel_error < GRAD_CHECK_TOLERANCE;
        ok &= pass;
        println!(
            "seed={} params={} max_rel_error={:.3e} {}",
            r.seed,
            r.num_params,
            r.max_rel_error,
            if pass { "ok" } else { "FAIL" }
        );
    }
    Ok(ok)
}

pub fn gen_fixtures(ctx: &Context) -> Result<()> {
    let fixtures = generate(&ctx.config.fixtures());
    fixtures.write(&ctx.out, ctx.seed())?;
    println!(
        "queries={} documents={} dir={}",
        fixtures.queries.len(),
        fixtures.corpus.len(),
        ctx.out.display()
    );
    Ok(())
}

pub fn describe(ctx: &Context) -> Result<()> {
    ctx.config.validate()?;
    print!("{}", ctx.config.render());
    let layout = socialformer::model::Layout::new(&ctx.config.model);
    println!("# parameters = {}", layout.total);
    Ok(())
}
