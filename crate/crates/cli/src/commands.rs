//! One function per subcommand. Each resolves its settings into the run
//! config, calls the library, writes its artifact and then the manifest.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use evhop::corpus::{load_claims, load_corpus, write_claims_jsonl, Claim, ClassCounts, Corpus};
use evhop::dense::{load_embeddings, save_embeddings, DenseIndex, EmbeddingStore};
use evhop::eval::{evaluate, MultiHopRule, Prediction, RankedEvidence, RetrievalRun};
use evhop::hybrid::FusionStrategy;
use evhop::learning::schedule::{CONTRASTIVE_TAG, MULTITASK_TAG};
use evhop::learning::train::read_training_file;
use evhop::learning::{train, DualEncoderModel, LinearDualEncoder, MixedObjectiveSchedule, Side};
use evhop::negatives::{contrastive_records, RerankerSimilarity, TokenOverlap};
use evhop::pipeline::{
    run_hop, run_multihop, ClaimRun, Components, DenseRetriever, RetrieverKind, SparseRetriever,
};
use evhop::rerank::{
    read_pair_records, reranker_training_records, LinearPairScorer, LogitsFileScorer, NonGoldScore,
    PairQuery, PairScorer, PlantedOracle,
};
use evhop::sparse::{load_index, save_index, Bm25Index};
use evhop::synthetic::{generate, SyntheticConfig};
use evhop::tuning::grid_search;
use rayon::prelude::*;

use crate::config::{parse_ratio, RunConfig, ScorerKind, SimilarityKind, StrategyKind};
use crate::io::{read_jsonl, write_json, write_jsonl, write_with};
use crate::manifest;
use crate::{Command, GlobalArgs, Preset, RetrievalInputs, UsageError};

macro_rules! set {
    ($slot:expr, $value:expr) => {
        if let Some(v) = $value {
            $slot = v;
        }
    };
}

pub fn run(global: &GlobalArgs, command: Command) -> Result<()> {
    let mut cfg = match &global.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    set!(cfg.seed, global.seed.map(Some));
    match command {
        Command::IngestCorpus(a) => {
            cfg.set_path("input", a.input.as_ref());
            cfg.set_path("out", a.out.as_ref());
            if a.no_normalize {
                cfg.ingest.normalize = false;
            }
            if a.skip_empty_ids {
                cfg.ingest.skip_empty_ids = true;
            }
            ingest_corpus(&cfg)
        }
        Command::IngestClaims(a) => {
            cfg.set_path("input", a.input.as_ref());
            cfg.set_path("corpus", a.corpus.as_ref());
            cfg.set_path("out", a.out.as_ref());
            cfg.set_path("report", a.report.as_ref());
            ingest_claims(&cfg)
        }
        Command::BuildSparse(a) => {
            cfg.set_path("corpus", a.corpus.as_ref());
            cfg.set_path("out", a.out.as_ref());
            set!(cfg.bm25.k1, a.k1);
            set!(cfg.bm25.b, a.b);
            build_sparse(&cfg)
        }
        Command::BuildDense(a) => {
            cfg.set_path("corpus", a.corpus.as_ref());
            cfg.set_path("model", a.model.as_ref());
            cfg.set_path("out", a.out.as_ref());
            build_dense(&cfg)
        }
        Command::Encode(a) => {
            cfg.set_path("claims", a.claims.as_ref());
            cfg.set_path("model", a.model.as_ref());
            cfg.set_path("out", a.out.as_ref());
            encode(&cfg)
        }
        Command::SampleNegatives(a) => {
            for (name, p) in [
                ("claims", &a.claims),
                ("corpus", &a.corpus),
                ("index", &a.index),
                ("out", &a.out),
            ] {
                cfg.set_path(name, p.as_ref());
            }
            cfg.set_path("scorer_model", a.scorer_model.as_ref());
            set!(cfg.similarity, a.similarity);
            set!(cfg.negatives.pool, a.pool);
            set!(cfg.negatives.threshold, a.threshold);
            set!(cfg.negatives.keep, a.keep);
            sample_negatives(&cfg)
        }
        Command::Train(a) => {
            cfg.set_path("contrastive", a.contrastive.as_ref());
            cfg.set_path("multitask", a.multitask.as_ref());
            cfg.set_path("init", a.init.as_ref());
            cfg.set_path("out", a.out.as_ref());
            set!(cfg.schedule.ratio, a.ratio);
            set!(cfg.schedule.cycles, a.cycles);
            set!(cfg.train.learning_rate, a.learning_rate);
            set!(cfg.train.tau, a.tau);
            set!(cfg.train.batch_size, a.batch_size);
            set!(cfg.train.alpha, a.alpha);
            set!(cfg.train.beta, a.beta);
            if a.no_in_batch {
                cfg.train.in_batch = false;
            }
            set!(cfg.encoder.feature_dim, a.feature_dim);
            set!(cfg.encoder.embed_dim, a.embed_dim);
            train_encoder(&mut cfg)
        }
        Command::BuildRerankerData(a) => {
            for (name, p) in [
                ("claims", &a.claims),
                ("corpus", &a.corpus),
                ("retrievals", &a.retrievals),
                ("out", &a.out),
            ] {
                cfg.set_path(name, p.as_ref());
            }
            set!(cfg.reranker_data.negatives, a.negatives);
            set!(cfg.reranker_data.pool, a.pool);
            build_reranker_data(&cfg)
        }
        Command::TrainReranker(a) => {
            cfg.set_path("pairs", a.pairs.as_ref());
            cfg.set_path("out", a.out.as_ref());
            set!(cfg.pair_train.epochs, a.epochs);
            set!(cfg.pair_train.learning_rate, a.learning_rate);
            set!(cfg.pair_train.feature_dim, a.feature_dim);
            train_reranker(&mut cfg)
        }
        Command::Retrieve(a) => {
            apply_inputs(&mut cfg, &a.inputs);
            set!(cfg.rerank.k, a.k);
            retrieve(&cfg)
        }
        Command::Multihop(a) => {
            apply_inputs(&mut cfg, &a.inputs);
            set!(cfg.hop.beam, a.beam);
            set!(cfg.hop.fanout, a.fanout);
            set!(cfg.hop.max_hops, a.max_hops);
            set!(cfg.hybrid.mth, a.mth);
            set!(cfg.hybrid.gamma, a.gamma);
            multihop(&cfg)
        }
        Command::Fuse(a) => {
            cfg.set_path("runs", a.runs.as_ref());
            cfg.set_path("out", a.out.as_ref());
            set!(cfg.fusion.strategy, a.strategy);
            set!(cfg.hybrid.mth, a.mth);
            set!(cfg.hybrid.gamma, a.gamma);
            set!(cfg.fusion.threshold, a.threshold);
            set!(cfg.fusion.factor, a.factor);
            set!(cfg.fusion.k, a.k);
            fuse(&cfg)
        }
        Command::GridSearch(a) => {
            cfg.set_path("runs", a.runs.as_ref());
            cfg.set_path("claims", a.claims.as_ref());
            cfg.set_path("out", a.out.as_ref());
            set!(cfg.grid.mths, a.mths);
            set!(cfg.grid.gammas, a.gammas);
            set!(cfg.grid.k, a.k);
            grid(&cfg)
        }
        Command::Evaluate(a) => {
            cfg.set_path("claims", a.claims.as_ref());
            cfg.set_path("evidence", a.evidence.as_ref());
            cfg.set_path("predictions", a.predictions.as_ref());
            cfg.set_path("out", a.out.as_ref());
            set!(cfg.eval.k, a.k);
            if a.any_multihop {
                cfg.eval.multihop_rule = MultiHopRule::Any;
            }
            evaluate_run(&cfg)
        }
        Command::GenerateFixture(a) => {
            cfg.set_path("out_dir", a.out_dir.as_ref());
            let seed = cfg.require_seed()?;
            cfg.synthetic = match a.preset {
                Some(Preset::Fixture) => SyntheticConfig::fixture(seed),
                Some(Preset::Planted) => SyntheticConfig::planted(seed),
                None => SyntheticConfig {
                    seed,
                    ..cfg.synthetic
                },
            };
            generate_fixture(&cfg)
        }
    }
}

fn apply_inputs(cfg: &mut RunConfig, a: &RetrievalInputs) {
    for (name, p) in [
        ("claims", &a.claims),
        ("corpus", &a.corpus),
        ("index", &a.index),
        ("model", &a.model),
        ("embeddings", &a.embeddings),
        ("scorer_model", &a.scorer_model),
        ("out", &a.out),
    ] {
        cfg.set_path(name, p.as_ref());
    }
    if let Some(r) = a.retriever {
        cfg.hop.retrievers = vec![r.into()];
    }
    set!(cfg.scorer, a.scorer);
    if let Some(d) = a.depth {
        cfg.hop.depths = vec![d];
    }
    if let Some(d) = a.rerank_depth {
        cfg.hop.rerank_depth = d;
        cfg.rerank.depth = d;
    }
}

fn corpus(cfg: &RunConfig) -> Result<Corpus> {
    let p = cfg.path("corpus")?;
    load_corpus(p, cfg.ingest).with_context(|| format!("loading corpus {}", p.display()))
}

fn claims(cfg: &RunConfig, corpus: Option<&Corpus>) -> Result<Vec<Claim>> {
    let p = cfg.path("claims")?;
    let loaded =
        load_claims(p, corpus).with_context(|| format!("loading claims {}", p.display()))?;
    if !loaded.report.unresolved.is_empty() {
        log::warn!(
            "{} evidence addresses did not resolve",
            loaded.report.unresolved.len()
        );
    }
    Ok(loaded.claims)
}

fn ingest_corpus(cfg: &RunConfig) -> Result<()> {
    let input = cfg.path("input")?;
    let out = cfg.path("out")?;
    let corpus = load_corpus(input, cfg.ingest)?;
    write_with(out, |w| Ok(corpus.write_jsonl(w)?))?;
    println!("{}", serde_json::to_string(&corpus.stats())?);
    manifest::write(
        "ingest-corpus",
        cfg,
        &[("input", input)],
        &[("corpus", out)],
    )?;
    Ok(())
}

fn ingest_claims(cfg: &RunConfig) -> Result<()> {
    let input = cfg.path("input")?;
    let out = cfg.path("out")?;
    let corpus = cfg.opt_path("corpus").map(|_| corpus(cfg)).transpose()?;
    let loaded = load_claims(input, corpus.as_ref())?;
    write_with(out, |w| Ok(write_claims_jsonl(&loaded.claims, w)?))?;
    let counts = ClassCounts::of(&loaded.claims);
    println!("{}", serde_json::to_string(&counts)?);
    let mut inputs = vec![("input", input)];
    inputs.extend(cfg.opt_path("corpus").map(|p| ("corpus", p)));
    let mut outputs = vec![("claims", out)];
    if let Some(report) = cfg.opt_path("report") {
        write_json(report, &loaded.report)?;
        outputs.push(("report", report));
    }
    manifest::write("ingest-claims", cfg, &inputs, &outputs)?;
    Ok(())
}

fn build_sparse(cfg: &RunConfig) -> Result<()> {
    let out = cfg.path("out")?;
    let index = Bm25Index::build(&corpus(cfg)?, cfg.bm25)?;
    save_index(&index, out)?;
    manifest::write(
        "build-sparse",
        cfg,
        &[("corpus", cfg.path("corpus")?)],
        &[("index", out)],
    )?;
    Ok(())
}

fn load_model(path: &Path) -> Result<DualEncoderModel> {
    DualEncoderModel::load(path).with_context(|| format!("loading model {}", path.display()))
}

fn build_dense(cfg: &RunConfig) -> Result<()> {
    let out = cfg.path("out")?;
    let model = load_model(cfg.path("model")?)?;
    let corpus = corpus(cfg)?;
    let sentences: Vec<_> = corpus.indexable().collect();
    let vectors: Vec<Vec<f32>> = sentences
        .par_iter()
        .map(|(_, text)| model.encoder.encode_f32(Side::Sentence, text))
        .collect();
    let mut store = EmbeddingStore::new(model.encoder.embed_dim());
    for ((addr, _), v) in sentences.iter().zip(&vectors) {
        store.push(addr.to_string(), v)?;
    }
    save_embeddings(&store, out)?;
    manifest::write(
        "build-dense",
        cfg,
        &[
            ("corpus", cfg.path("corpus")?),
            ("model", cfg.path("model")?),
        ],
        &[("embeddings", out)],
    )?;
    Ok(())
}

fn encode(cfg: &RunConfig) -> Result<()> {
    let out = cfg.path("out")?;
    let model = load_model(cfg.path("model")?)?;
    let claims = claims(cfg, None)?;
    let mut store = EmbeddingStore::new(model.encoder.embed_dim());
    for c in &claims {
        store.push(
            c.id.to_string(),
            &model.encoder.encode_f32(Side::Query, &c.text),
        )?;
    }
    save_embeddings(&store, out)?;
    manifest::write(
        "encode",
        cfg,
        &[
            ("claims", cfg.path("claims")?),
            ("model", cfg.path("model")?),
        ],
        &[("embeddings", out)],
    )?;
    Ok(())
}

fn sample_negatives(cfg: &RunConfig) -> Result<()> {
    cfg.require_seed()?;
    let out = cfg.path("out")?;
    let corpus = corpus(cfg)?;
    let claims = claims(cfg, Some(&corpus))?;
    let index = load_index(cfg.path("index")?)?;
    let mut inputs = vec![
        ("claims", cfg.path("claims")?),
        ("corpus", cfg.path("corpus")?),
        ("index", cfg.path("index")?),
    ];
    let (records, shortfalls) = match cfg.similarity {
        SimilarityKind::Overlap => {
            contrastive_records(&claims, &corpus, &index, &TokenOverlap, &cfg.negatives)?
        }
        SimilarityKind::Reranker => {
            let p = cfg.path("scorer_model")?;
            inputs.push(("scorer_model", p));
            let scorer = RerankerSimilarity(LinearPairScorer::load(p)?);
            contrastive_records(&claims, &corpus, &index, &scorer, &cfg.negatives)?
        }
    };
    write_with(out, |w| {
        Ok(evhop::learning::train::write_training_records(w, &records)?)
    })?;
    eprintln!(
        "{} records, {} claims short of negatives",
        records.len(),
        shortfalls.len()
    );
    manifest::write("sample-negatives", cfg, &inputs, &[("records", out)])?;
    Ok(())
}

fn train_encoder(cfg: &mut RunConfig) -> Result<()> {
    let seed = cfg.require_seed()?;
    cfg.train.seed = seed;
    let out = cfg.path("out")?.to_path_buf();
    let schedule =
        MixedObjectiveSchedule::from_ratio(parse_ratio(&cfg.schedule.ratio)?, cfg.schedule.cycles);
    let mut datasets = BTreeMap::new();
    let mut inputs = Vec::new();
    for (name, tag) in [
        ("contrastive", CONTRASTIVE_TAG),
        ("multitask", MULTITASK_TAG),
    ] {
        if let Some(p) = cfg.opt_path(name) {
            datasets.insert(tag.to_owned(), read_training_file(p)?);
            inputs.push((name, p.to_path_buf()));
        }
    }
    if let Some(e) = schedule
        .entries
        .iter()
        .find(|e| !datasets.contains_key(&e.dataset))
    {
        let flag = if e.dataset == CONTRASTIVE_TAG {
            "--contrastive"
        } else {
            "--multitask"
        };
        bail!(UsageError(format!(
            "the schedule uses {} epochs; pass {flag}",
            e.dataset
        )));
    }
    let mut model = match cfg.opt_path("init") {
        Some(p) => {
            inputs.push(("init", p.to_path_buf()));
            load_model(p)?
        }
        None => DualEncoderModel::new(LinearDualEncoder::random(
            cfg.encoder.feature_dim,
            cfg.encoder.embed_dim,
            seed,
        )?),
    };
    let logs = train(&mut model, &datasets, &schedule, &cfg.train)?;
    model.save(&out)?;
    for l in &logs {
        println!("{}", serde_json::to_string(l)?);
    }
    let inputs: Vec<(&str, &Path)> = inputs.iter().map(|(n, p)| (*n, p.as_path())).collect();
    manifest::write("train", cfg, &inputs, &[("model", &out)])?;
    Ok(())
}

fn build_reranker_data(cfg: &RunConfig) -> Result<()> {
    let out = cfg.path("out")?;
    let corpus = corpus(cfg)?;
    let claims = claims(cfg, Some(&corpus))?;
    let retrievals: BTreeMap<u64, Vec<_>> = read_jsonl::<RankedEvidence>(cfg.path("retrievals")?)?
        .into_iter()
        .map(|r| (r.claim_id, r.evidence.into_iter().map(|(a, _)| a).collect()))
        .collect();
    let (records, shortfalls) =
        reranker_training_records(&claims, &corpus, &retrievals, &cfg.reranker_data)?;
    write_jsonl(out, &records)?;
    eprintln!(
        "{} pairs, {} claims short of NEI pairs",
        records.len(),
        shortfalls.len()
    );
    manifest::write(
        "build-reranker-data",
        cfg,
        &[
            ("claims", cfg.path("claims")?),
            ("corpus", cfg.path("corpus")?),
            ("retrievals", cfg.path("retrievals")?),
        ],
        &[("pairs", out)],
    )?;
    Ok(())
}

fn train_reranker(cfg: &mut RunConfig) -> Result<()> {
    cfg.pair_train.seed = cfg.require_seed()?;
    let pairs = cfg.path("pairs")?;
    let out = cfg.path("out")?;
    let records = read_pair_records(pairs)?;
    let (model, losses) = evhop::rerank::train_pair_scorer(&records, &cfg.pair_train)?;
    model.save(out)?;
    println!("{}", serde_json::to_string(&losses)?);
    manifest::write(
        "train-reranker",
        cfg,
        &[("pairs", pairs)],
        &[("scorer", out)],
    )?;
    Ok(())
}

/// Loaded indexes and scorer for the retrieval commands.
struct Loaded {
    corpus: Corpus,
    claims: Vec<Claim>,
    sparse: Option<Bm25Index>,
    dense: Option<(LinearDualEncoder, DenseIndex)>,
    scorer: Box<dyn PairScorer>,
}

impl Loaded {
    fn components(&self) -> Components<'_> {
        Components {
            corpus: &self.corpus,
            sparse: self.sparse.as_ref().map(SparseRetriever),
            dense: self
                .dense
                .as_ref()
                .map(|(encoder, index)| DenseRetriever { encoder, index }),
            scorer: self.scorer.as_ref(),
        }
    }
}

fn load_for_retrieval<'c>(
    cfg: &'c RunConfig,
    hops: usize,
    inputs: &mut Vec<(&'static str, &'c Path)>,
) -> Result<Loaded> {
    let corpus = corpus(cfg)?;
    let claims = claims(cfg, Some(&corpus))?;
    inputs.push(("claims", cfg.path("claims")?));
    inputs.push(("corpus", cfg.path("corpus")?));
    let kinds: Vec<RetrieverKind> = (1..=hops).map(|h| cfg.hop.retriever(h)).collect();
    let sparse = if kinds.contains(&RetrieverKind::Sparse) {
        let p = cfg.path("index")?;
        inputs.push(("index", p));
        Some(load_index(p)?)
    } else {
        None
    };
    let dense = if kinds.contains(&RetrieverKind::Dense) {
        let (m, e) = (cfg.path("model")?, cfg.path("embeddings")?);
        inputs.push(("model", m));
        inputs.push(("embeddings", e));
        Some((
            load_model(m)?.encoder,
            DenseIndex::new(load_embeddings(e)?)?,
        ))
    } else {
        None
    };
    let scorer: Box<dyn PairScorer> = match cfg.scorer {
        ScorerKind::Linear => {
            let p = cfg.path("scorer_model")?;
            inputs.push(("scorer_model", p));
            Box::new(LinearPairScorer::load(p)?)
        }
        ScorerKind::Logits => {
            let p = cfg.path("scorer_model")?;
            inputs.push(("scorer_model", p));
            Box::new(LogitsFileScorer::load(p)?)
        }
        ScorerKind::Oracle => Box::new(PlantedOracle::new(
            &claims,
            NonGoldScore::Graded {
                floor: cfg.oracle.floor,
                span: cfg.oracle.span,
            },
        )),
    };
    Ok(Loaded {
        corpus,
        claims,
        sparse,
        dense,
        scorer,
    })
}

fn retrieve(cfg: &RunConfig) -> Result<()> {
    cfg.rerank.validate()?;
    cfg.hop.validate()?;
    let out = cfg.path("out")?;
    let mut inputs = Vec::new();
    let loaded = load_for_retrieval(cfg, 1, &mut inputs)?;
    let comps = loaded.components();
    let retriever: &dyn evhop::pipeline::Retriever = match cfg.hop.retriever(1) {
        RetrieverKind::Sparse => comps.sparse.as_ref().map(|r| r as _),
        RetrieverKind::Dense => comps.dense.as_ref().map(|r| r as _),
    }
    .context("retriever not loaded")?;
    let records: Vec<RankedEvidence> = loaded
        .claims
        .par_iter()
        .map(|c| {
            let q = PairQuery {
                claim_id: Some(c.id),
                text: &c.text,
            };
            let mut ranked = run_hop(
                &q,
                retriever,
                comps.corpus,
                comps.scorer,
                cfg.hop.depth(1),
                cfg.rerank.depth,
            )?;
            ranked.truncate(cfg.rerank.k);
            Ok(RankedEvidence {
                claim_id: c.id,
                evidence: ranked,
            })
        })
        .collect::<evhop::Result<_>>()?;
    write_jsonl(out, &records)?;
    manifest::write("retrieve", cfg, &inputs, &[("evidence", out)])?;
    Ok(())
}

fn multihop(cfg: &RunConfig) -> Result<()> {
    cfg.hop.validate()?;
    let params = cfg.hybrid.params()?;
    let out = cfg.path("out")?;
    let mut inputs = Vec::new();
    let loaded = load_for_retrieval(cfg, cfg.hop.max_hops, &mut inputs)?;
    let comps = loaded.components();
    let runs: Vec<ClaimRun> = loaded
        .claims
        .par_iter()
        .map(|c| run_multihop(c.id, &c.text, &cfg.hop, &params, &comps))
        .collect::<evhop::Result<_>>()?;
    write_jsonl(out, &runs)?;
    manifest::write("multihop", cfg, &inputs, &[("runs", out)])?;
    Ok(())
}

pub fn strategy(cfg: &RunConfig) -> FusionStrategy {
    match cfg.fusion.strategy {
        StrategyKind::Hybrid => FusionStrategy::Hybrid {
            mth: cfg.hybrid.mth,
            gamma: cfg.hybrid.gamma,
        },
        StrategyKind::Threshold => FusionStrategy::Threshold {
            threshold: cfg.fusion.threshold,
        },
        StrategyKind::Scale => FusionStrategy::Scale {
            factor: cfg.fusion.factor,
        },
    }
}

fn fuse(cfg: &RunConfig) -> Result<()> {
    if cfg.fusion.k == 0 {
        bail!(UsageError("--k must be positive".into()));
    }
    let runs_path = cfg.path("runs")?;
    let out = cfg.path("out")?;
    let strategy = strategy(cfg);
    let runs: Vec<ClaimRun> = read_jsonl(runs_path)?;
    let records = runs
        .iter()
        .map(|r| {
            let mut evidence = strategy.fuse(&r.single_map(), &r.sequences)?;
            evidence.truncate(cfg.fusion.k);
            Ok(RankedEvidence {
                claim_id: r.claim_id,
                evidence,
            })
        })
        .collect::<evhop::Result<Vec<_>>>()?;
    write_jsonl(out, &records)?;
    manifest::write("fuse", cfg, &[("runs", runs_path)], &[("evidence", out)])?;
    Ok(())
}

fn grid(cfg: &RunConfig) -> Result<()> {
    let runs_path = cfg.path("runs")?;
    let out = cfg.path("out")?;
    let runs: Vec<ClaimRun> = read_jsonl(runs_path)?;
    let claims = claims(cfg, None)?;
    let result = grid_search(&runs, &claims, &cfg.grid.mths, &cfg.grid.gammas, cfg.grid.k)?;
    write_json(out, &result)?;
    println!("{}", serde_json::to_string(&result.best)?);
    manifest::write(
        "grid-search",
        cfg,
        &[("runs", runs_path), ("claims", cfg.path("claims")?)],
        &[("grid", out)],
    )?;
    Ok(())
}

fn evaluate_run(cfg: &RunConfig) -> Result<()> {
    let out = cfg.path("out")?;
    let evidence = cfg.path("evidence")?;
    let predictions = cfg.opt_path("predictions");
    let claims = claims(cfg, None)?;
    let run = RetrievalRun::load(evidence, predictions)?;
    let report = evaluate(&run, &claims, &cfg.eval)?;
    write_json(out, &report)?;
    print!("{}", report.to_table());
    let mut inputs = vec![("claims", cfg.path("claims")?), ("evidence", evidence)];
    inputs.extend(predictions.map(|p| ("predictions", p)));
    manifest::write("evaluate", cfg, &inputs, &[("metrics", out)])?;
    Ok(())
}

fn generate_fixture(cfg: &RunConfig) -> Result<()> {
    let dir = cfg.path("out_dir")?;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let data = generate(&cfg.synthetic)?;
    let (c, q, p) = (
        dir.join("corpus.jsonl"),
        dir.join("claims.jsonl"),
        dir.join("predictions.jsonl"),
    );
    write_with(&c, |w| Ok(data.corpus.write_jsonl(w)?))?;
    write_with(&q, |w| Ok(write_claims_jsonl(&data.claims, w)?))?;
    let predictions: Vec<Prediction> = data
        .claims
        .iter()
        .map(|c| Prediction {
            claim_id: c.id,
            label: c.label,
        })
        .collect();
    write_jsonl(&p, &predictions)?;
    manifest::write(
        "generate-fixture",
        cfg,
        &[],
        &[("corpus", &c), ("claims", &q), ("predictions", &p)],
    )?;
    Ok(())
}
