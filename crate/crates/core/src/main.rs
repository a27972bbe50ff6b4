use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use spoofbench::enhance::{enhance, EnhanceConfig, EnhanceMethod};
use spoofbench::eval::{compute_ltas, det_points, per_attack_eers, reports_tsv, write_det_csv, LtasProfile};
use spoofbench::features::{compute_vad, extract_with_vad, FeatureConfig, FeatureKind};
use spoofbench::fusion::{apply_fusion, train_logistic_fusion, FusionModel, DEFAULT_L2};
use spoofbench::gmm::{llr_score, train_gmm, GmmConfig, GmmModel};
use spoofbench::harness::{derive_seed, make_toy_corpus, run_experiment, ExperimentConfig, ToyCorpusConfig};
use spoofbench::io::{
    read_features, read_scores, read_wav, write_atomic, write_features, write_scores, Manifest, ManifestRow, Subset,
};
use spoofbench::ivector::{
    baum_welch_stats, class_mean, extract_ivector, ivector_detection_score, length_normalize, train_plda, train_tv,
    train_wccn, PldaConfig, PldaModel, TvConfig, TvMatrix, WccnTransform,
};
use spoofbench::matrix::Matrix;
use spoofbench::noise::{mix_at_snr, LevelMethod, MixSpec, NoiseKind};
use spoofbench::scores::{Label, ScoreSet, TrialScore};
use spoofbench::{Error, Result};

#[derive(Parser)]
#[command(name = "spoofbench", version, about = "Synthetic speech detection workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract features for every manifest row.
    Extract(ExtractArgs),
    /// Add noise to every manifest row at a target SNR.
    MixNoise(MixNoiseArgs),
    /// Enhance one wav file.
    Enhance(EnhanceArgs),
    /// Train natural and synthetic GMMs on the train subset.
    TrainGmm(TrainGmmArgs),
    /// Train the i-vector UBM on train and background rows.
    TrainUbm(TrainUbmArgs),
    /// Train the total-variability matrix.
    TrainTv(TrainTvArgs),
    /// Extract i-vectors.
    ExtractIvec(ExtractIvecArgs),
    /// Train WCCN on training i-vectors.
    TrainWccn(TrainWccnArgs),
    /// Train PLDA on training i-vectors.
    TrainPlda(TrainPldaArgs),
    /// Score utterances with the GMM back-end.
    ScoreGmm(ScoreGmmArgs),
    /// Score i-vectors with cosine or PLDA scoring.
    ScoreIvec(ScoreIvecArgs),
    /// Fuse score files.
    Fuse(FuseArgs),
    /// Pooled and per-attack ROCCH EER of a score file.
    Eval(EvalArgs),
    /// Long-term average spectrum of manifest rows.
    Ltas(LtasArgs),
    /// Generate the built-in toy corpus.
    ToyCorpus(ToyArgs),
    /// Run the full experiment grid.
    Run(RunArgs),
}

#[derive(Args)]
struct FeatureSel {
    #[arg(long)]
    feature: FeatureKind,
    /// Experiment config whose `[feature.<kind>]` table overrides the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl FeatureSel {
    fn load(&self) -> Result<FeatureConfig> {
        let exp = match &self.config {
            Some(p) => ExperimentConfig::read(p)?,
            None => ExperimentConfig::default(),
        };
        exp.feature_config(self.feature)
    }
}

#[derive(Args)]
struct ExtractArgs {
    #[command(flatten)]
    sel: FeatureSel,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Take VAD labels from the rows of this (clean) manifest with the same utt_id.
    #[arg(long)]
    vad_from: Option<PathBuf>,
}

#[derive(Args)]
struct MixNoiseArgs {
    /// white, car, babble or file:<path>
    #[arg(long)]
    noise: NoiseKind,
    #[arg(long, allow_negative_numbers = true)]
    snr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "p56")]
    level: Level,
}

#[derive(Clone, Copy, ValueEnum)]
enum Level {
    P56,
    Rms,
}

#[derive(Args)]
struct EnhanceArgs {
    #[arg(long)]
    method: EnhanceMethod,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = EnhanceConfig::default().noise_lead_ms)]
    noise_lead_ms: f64,
}

#[derive(Args)]
struct FeatureInputs {
    #[arg(long)]
    manifest: PathBuf,
    /// Directory written by `extract`.
    #[arg(long)]
    features_dir: PathBuf,
    #[arg(long)]
    feature: FeatureKind,
}

#[derive(Args)]
struct TrainGmmArgs {
    #[command(flatten)]
    inputs: FeatureInputs,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = GmmConfig::default().n_components)]
    components: usize,
    #[arg(long, default_value_t = GmmConfig::default().n_iter)]
    iter: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainUbmArgs {
    #[command(flatten)]
    inputs: FeatureInputs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = GmmConfig::default().n_components)]
    components: usize,
    #[arg(long, default_value_t = GmmConfig::default().n_iter)]
    iter: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainTvArgs {
    #[command(flatten)]
    inputs: FeatureInputs,
    #[arg(long)]
    ubm: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = TvConfig::default().rank)]
    rank: usize,
    #[arg(long, default_value_t = TvConfig::default().n_iter)]
    iter: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ExtractIvecArgs {
    #[command(flatten)]
    inputs: FeatureInputs,
    #[arg(long)]
    ubm: PathBuf,
    #[arg(long)]
    tv: PathBuf,
    #[arg(long, default_value = "train")]
    subset: Subset,
    /// Output TSV: utt_id, then space-separated values.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainWccnArgs {
    #[arg(long)]
    ivecs: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainPldaArgs {
    #[arg(long)]
    ivecs: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    wccn: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    latent_dim: Option<usize>,
    #[arg(long, default_value_t = PldaConfig::default().n_iter)]
    iter: usize,
}

#[derive(Args)]
struct ScoreGmmArgs {
    #[command(flatten)]
    inputs: FeatureInputs,
    /// Directory written by `train-gmm`.
    #[arg(long)]
    model_dir: PathBuf,
    #[arg(long, default_value = "eval")]
    subset: Subset,
    #[arg(long, default_value = "clean")]
    condition: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Scoring {
    Cosine,
    Plda,
}

#[derive(Args)]
struct ScoreIvecArgs {
    #[arg(long, value_enum)]
    scoring: Scoring,
    /// Training i-vectors defining the two classes.
    #[arg(long)]
    train_ivecs: PathBuf,
    /// I-vectors to score.
    #[arg(long)]
    ivecs: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    wccn: Option<PathBuf>,
    #[arg(long)]
    plda: Option<PathBuf>,
    #[arg(long, default_value = "clean")]
    condition: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum FuseMethod {
    Avg,
    Logistic,
}

#[derive(Args)]
struct FuseArgs {
    #[arg(long, value_enum)]
    method: FuseMethod,
    #[arg(long, num_args = 1.., required = true)]
    scores: Vec<PathBuf>,
    /// Development scores, one per system in the same order (logistic only).
    #[arg(long, num_args = 1..)]
    dev_scores: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Where to write the fusion model (default: `<out>.fusion`).
    #[arg(long)]
    model_out: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_L2)]
    l2: f64,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    scores: PathBuf,
    /// Comma-separated attack ids for an extra macro-average.
    #[arg(long, value_delimiter = ',')]
    attacks: Option<Vec<String>>,
    #[arg(long)]
    det: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LtasArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    subset: Option<Subset>,
    #[arg(long)]
    label: Option<Label>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ToyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = ToyCorpusConfig::default().n_train)]
    n_train: usize,
    #[arg(long, default_value_t = ToyCorpusConfig::default().n_dev)]
    n_dev: usize,
    #[arg(long, default_value_t = ToyCorpusConfig::default().n_eval)]
    n_eval: usize,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.code());
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Extract(a) => cmd_extract(a),
        Command::MixNoise(a) => cmd_mix_noise(a),
        Command::Enhance(a) => cmd_enhance(a),
        Command::TrainGmm(a) => cmd_train_gmm(a),
        Command::TrainUbm(a) => cmd_train_ubm(a),
        Command::TrainTv(a) => cmd_train_tv(a),
        Command::ExtractIvec(a) => cmd_extract_ivec(a),
        Command::TrainWccn(a) => cmd_train_wccn(a),
        Command::TrainPlda(a) => cmd_train_plda(a),
        Command::ScoreGmm(a) => cmd_score_gmm(a),
        Command::ScoreIvec(a) => cmd_score_ivec(a),
        Command::Fuse(a) => cmd_fuse(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Ltas(a) => cmd_ltas(a),
        Command::ToyCorpus(a) => cmd_toy(a),
        Command::Run(a) => cmd_run(a),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_atomic(path, |w| {
        use std::io::Write;
        w.write_all(text.as_bytes())?;
        Ok(())
    })
}

fn require(path: &Path, hint: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingModel {
            path: path.to_path_buf(),
            hint: hint.to_string(),
        })
    }
}

/// `<path>.train.txt`, the utterances a model was trained on.
fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".train.txt");
    PathBuf::from(s)
}

fn write_train_list(path: &Path, ids: &[&str]) -> Result<()> {
    let mut ids = ids.to_vec();
    ids.sort_unstable();
    ids.dedup();
    write_text(path, &ids.iter().map(|s| format!("{s}\n")).collect::<String>())
}

fn read_train_list(path: &Path) -> Result<HashSet<String>> {
    Ok(std::fs::read_to_string(path)?.lines().map(String::from).collect())
}

fn check_disjoint(train: &HashSet<String>, tested: &[&str], what: &Path) -> Result<()> {
    match tested.iter().find(|id| train.contains(**id)) {
        Some(id) => Err(Error::Hygiene(format!(
            "utterance `{id}` was used to train {}",
            what.display()
        ))),
        None => Ok(()),
    }
}

fn feature_path(dir: &Path, utt: &str, kind: FeatureKind) -> PathBuf {
    dir.join(format!("{utt}.{kind}.spbf"))
}

/// Features of `row`; `None` when `extract` found no usable frames.
fn load_features(inputs: &FeatureInputs, row: &ManifestRow) -> Result<Option<Matrix>> {
    let p = feature_path(&inputs.features_dir, &row.utt_id, inputs.feature);
    if p.exists() {
        return read_features(&p).map(Some);
    }
    if p.with_extension("empty").exists() {
        return Ok(None);
    }
    Err(Error::InvalidArgument(format!(
        "no features at {}: run `spoofbench extract --feature {}` first",
        p.display(),
        inputs.feature
    )))
}

/// Clean training rows: the train subset without a noise tag.
fn train_rows(m: &Manifest) -> Vec<&ManifestRow> {
    m.subset(Subset::Train).filter(|r| r.condition.is_none()).collect()
}

fn load_set<'a>(inputs: &FeatureInputs, rows: &[&'a ManifestRow]) -> Result<Vec<(&'a ManifestRow, Matrix)>> {
    let feats: Vec<Option<Matrix>> = rows.par_iter().map(|r| load_features(inputs, r)).collect::<Result<_>>()?;
    Ok(rows
        .iter()
        .zip(feats)
        .filter_map(|(r, f)| match f {
            Some(f) => Some((*r, f)),
            None => {
                log::warn!("{}: no usable frames; skipped", r.utt_id);
                None
            }
        })
        .collect())
}

fn cmd_extract(a: ExtractArgs) -> Result<()> {
    let cfg = a.sel.load()?;
    let manifest = Manifest::read(&a.manifest)?;
    let vad_src = a.vad_from.as_deref().map(Manifest::read).transpose()?;
    let clean: BTreeMap<&str, &ManifestRow> = vad_src
        .as_ref()
        .map(|m| m.rows.iter().map(|r| (r.utt_id.as_str(), r)).collect())
        .unwrap_or_default();
    std::fs::create_dir_all(&a.out_dir)?;
    let empty: Vec<String> = manifest
        .rows
        .par_iter()
        .map(|row| -> Result<Option<String>> {
            let signal = read_wav(&manifest.resolve(row))?;
            let vad = match (&vad_src, clean.get(row.utt_id.as_str())) {
                (Some(src), Some(c)) => compute_vad(&read_wav(&src.resolve(c))?, &cfg)?,
                (Some(_), None) => {
                    return Err(Error::invalid(format!("`{}` is missing from the VAD manifest", row.utt_id)))
                }
                (None, _) => compute_vad(&signal, &cfg)?,
            };
            let path = feature_path(&a.out_dir, &row.utt_id, cfg.kind);
            match extract_with_vad(&signal, &cfg, &vad) {
                Ok(f) if f.values.rows() > 0 => write_features(&path, &f.values).map(|_| None),
                Ok(_) | Err(Error::EmptyFeatures(_)) => {
                    write_text(&path.with_extension("empty"), "")?;
                    Ok(Some(row.utt_id.clone()))
                }
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    for id in &empty {
        log::warn!("{id}: no usable {} frames", cfg.kind);
    }
    println!("extracted {} utterances ({} empty)", manifest.rows.len(), empty.len());
    Ok(())
}

fn cmd_mix_noise(a: MixNoiseArgs) -> Result<()> {
    let manifest = Manifest::read(&a.manifest)?;
    let source = a.noise.source()?;
    let spec = MixSpec {
        snr_db: a.snr,
        level_method: match a.level {
            Level::P56 => LevelMethod::P56Active,
            Level::Rms => LevelMethod::Rms,
        },
    };
    let tag = format!("{}_{}dB", source.label().replace(['/', '\\', ':'], "_"), a.snr);
    let wav_dir = a.out_dir.join("wav");
    std::fs::create_dir_all(&wav_dir)?;
    let results: Vec<(ManifestRow, String)> = manifest
        .rows
        .par_iter()
        .map(|row| -> Result<(ManifestRow, String)> {
            let signal = read_wav(&manifest.resolve(row))?;
            let seed = derive_seed(a.seed, &[&row.utt_id, "noise", &tag]);
            let mix = mix_at_snr(&signal, &source, &spec, seed)?;
            let rel = PathBuf::from("wav").join(format!("{}.wav", row.utt_id));
            spoofbench::io::write_wav(&a.out_dir.join(&rel), &mix.signal)?;
            let meta = format!(
                "{}\t{}\t{}\t{}\t{}",
                row.utt_id, mix.noise_gain, mix.clip_gain, mix.measured_snr_db, mix.clipped_samples
            );
            let mut out = row.clone();
            out.wav_path = rel;
            out.condition = Some(tag.clone());
            Ok((out, meta))
        })
        .collect::<Result<_>>()?;
    let mut meta = String::from("utt_id\tnoise_gain\tclip_gain\tmeasured_snr_db\tclipped_samples\n");
    let mut rows = Vec::with_capacity(results.len());
    for (r, m) in results {
        meta.push_str(&m);
        meta.push('\n');
        rows.push(r);
    }
    write_text(&a.out_dir.join("mix.tsv"), &meta)?;
    Manifest::new(rows, a.out_dir.clone())?.write(&a.out_dir.join("manifest.tsv"))?;
    println!("mixed {} utterances at {} dB ({tag})", manifest.rows.len(), a.snr);
    Ok(())
}

fn cmd_enhance(a: EnhanceArgs) -> Result<()> {
    let signal = read_wav(&a.input)?;
    let cfg = EnhanceConfig {
        noise_lead_ms: a.noise_lead_ms,
        ..EnhanceConfig::default()
    };
    let out = enhance(&signal, a.method, &cfg)?;
    spoofbench::io::write_wav(&a.out, &out)
}

fn cmd_train_gmm(a: TrainGmmArgs) -> Result<()> {
    let manifest = Manifest::read(&a.inputs.manifest)?;
    let set = load_set(&a.inputs, &train_rows(&manifest))?;
    let class = |l: Label| -> Vec<&Matrix> { set.iter().filter(|(r, _)| r.label == l).map(|(_, f)| f).collect() };
    let (nat, syn) = (class(Label::Human), class(Label::Spoof));
    if nat.is_empty() || syn.is_empty() {
        return Err(Error::DegenerateTraining(
            "the train subset must provide features for both labels".into(),
        ));
    }
    let cfg = |label: &str| GmmConfig {
        n_components: a.components,
        n_iter: a.iter,
        seed: derive_seed(a.seed, &[a.inputs.feature.name(), "gmm", label]),
        ..GmmConfig::default()
    };
    let (gn, _) = train_gmm(&nat, &cfg("human"))?;
    let (gs, _) = train_gmm(&syn, &cfg("spoof"))?;
    std::fs::create_dir_all(&a.out_dir)?;
    gn.write(&a.out_dir.join("natural.spgm"))?;
    gs.write(&a.out_dir.join("synthetic.spgm"))?;
    let ids: Vec<&str> = set.iter().map(|(r, _)| r.utt_id.as_str()).collect();
    write_train_list(&a.out_dir.join("train_utts.txt"), &ids)
}

fn cmd_train_ubm(a: TrainUbmArgs) -> Result<()> {
    let manifest = Manifest::read(&a.inputs.manifest)?;
    let mut rows = train_rows(&manifest);
    rows.extend(manifest.subset(Subset::Background));
    let set = load_set(&a.inputs, &rows)?;
    let feats: Vec<&Matrix> = set.iter().map(|(_, f)| f).collect();
    let cfg = GmmConfig {
        n_components: a.components,
        n_iter: a.iter,
        seed: derive_seed(a.seed, &[a.inputs.feature.name(), "ubm"]),
        ..GmmConfig::default()
    };
    let (ubm, _) = train_gmm(&feats, &cfg)?;
    ubm.write(&a.out)?;
    let ids: Vec<&str> = set.iter().map(|(r, _)| r.utt_id.as_str()).collect();
    write_train_list(&sidecar(&a.out), &ids)
}

fn load_ubm(path: &Path, feature: FeatureKind) -> Result<GmmModel> {
    require(path, &format!("spoofbench train-ubm --feature {feature} --out {}", path.display()))?;
    GmmModel::read(path)
}

fn cmd_train_tv(a: TrainTvArgs) -> Result<()> {
    let ubm = load_ubm(&a.ubm, a.inputs.feature)?;
    let manifest = Manifest::read(&a.inputs.manifest)?;
    let mut rows = train_rows(&manifest);
    rows.extend(manifest.subset(Subset::Background));
    let set = load_set(&a.inputs, &rows)?;
    let stats: Vec<_> = set.par_iter().map(|(_, f)| baum_welch_stats(f, &ubm)).collect::<Result<_>>()?;
    let cfg = TvConfig {
        rank: a.rank,
        n_iter: a.iter,
        seed: derive_seed(a.seed, &[a.inputs.feature.name(), "tv"]),
    };
    let (tv, log) = train_tv(&stats, &ubm, &cfg)?;
    log::info!("tv objective: {:?}", log.objective);
    tv.write(&a.out)?;
    let ids: Vec<&str> = set.iter().map(|(r, _)| r.utt_id.as_str()).collect();
    write_train_list(&sidecar(&a.out), &ids)
}

fn cmd_extract_ivec(a: ExtractIvecArgs) -> Result<()> {
    let ubm = load_ubm(&a.ubm, a.inputs.feature)?;
    require(&a.tv, &format!("spoofbench train-tv --feature {} --out {}", a.inputs.feature, a.tv.display()))?;
    let tv = TvMatrix::read(&a.tv, &ubm)?;
    let manifest = Manifest::read(&a.inputs.manifest)?;
    let rows: Vec<&ManifestRow> = match a.subset {
        Subset::Train => train_rows(&manifest),
        s => manifest.subset(s).collect(),
    };
    let set = load_set(&a.inputs, &rows)?;
    let ivecs: Vec<Vec<f64>> = set
        .par_iter()
        .map(|(_, f)| extract_ivector(&baum_welch_stats(f, &ubm)?, &tv))
        .collect::<Result<_>>()?;
    let ids: Vec<&str> = set.iter().map(|(r, _)| r.utt_id.as_str()).collect();
    let missing: Vec<&str> = rows.iter().map(|r| r.utt_id.as_str()).filter(|id| !ids.contains(id)).collect();
    write_ivecs(&a.out, &ids, &ivecs, &missing)
}

/// Rows of `utt_id  v1 v2 …`; utterances without features get an empty vector.
fn write_ivecs(path: &Path, ids: &[&str], ivecs: &[Vec<f64>], missing: &[&str]) -> Result<()> {
    let mut s = String::from("utt_id\tivector\n");
    for (id, w) in ids.iter().zip(ivecs) {
        let v: Vec<String> = w.iter().map(|x| x.to_string()).collect();
        let _ = writeln!(s, "{id}\t{}", v.join(" "));
    }
    for id in missing {
        let _ = writeln!(s, "{id}\t");
    }
    write_text(path, &s)
}

type Ivecs = Vec<(String, Option<Vec<f64>>)>;

fn read_ivecs(path: &Path) -> Result<Ivecs> {
    let origin = path.display().to_string();
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1).filter(|(_, l)| !l.trim().is_empty()) {
        let (id, vals) = line
            .split_once('\t')
            .ok_or_else(|| Error::format(&origin, format!("line {}: expected two columns", i + 1)))?;
        let v: Vec<f64> = vals
            .split_whitespace()
            .map(|x| x.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::format(&origin, format!("line {}: {e}", i + 1)))?;
        out.push((id.to_string(), (!v.is_empty()).then_some(v)));
    }
    Ok(out)
}

fn row_index(m: &Manifest) -> BTreeMap<&str, &ManifestRow> {
    m.rows.iter().map(|r| (r.utt_id.as_str(), r)).collect()
}

fn lookup<'a>(index: &BTreeMap<&str, &'a ManifestRow>, id: &str) -> Result<&'a ManifestRow> {
    index.get(id).copied().ok_or_else(|| Error::invalid(format!("`{id}` is not in the manifest")))
}

fn wccn_apply(wccn: Option<&WccnTransform>, w: &[f64]) -> Result<Vec<f64>> {
    match wccn {
        Some(t) => length_normalize(&t.apply(w)?),
        None => length_normalize(w),
    }
}

fn load_wccn(path: Option<&Path>) -> Result<Option<WccnTransform>> {
    path.map(|p| {
        require(p, &format!("spoofbench train-wccn --out {}", p.display()))?;
        WccnTransform::read(p)
    })
    .transpose()
}

fn cmd_train_wccn(a: TrainWccnArgs) -> Result<()> {
    let manifest = Manifest::read(&a.manifest)?;
    let index = row_index(&manifest);
    let ivecs = read_ivecs(&a.ivecs)?;
    let mut classes: [Vec<&[f64]>; 2] = [Vec::new(), Vec::new()];
    let mut ids = Vec::new();
    for (id, w) in &ivecs {
        if let Some(w) = w {
            classes[usize::from(lookup(&index, id)?.label == Label::Spoof)].push(w);
            ids.push(id.as_str());
        }
    }
    let t = train_wccn(&classes)?;
    if t.regularized {
        log::warn!("within-class covariance was regularized");
    }
    t.write(&a.out)?;
    write_train_list(&sidecar(&a.out), &ids)
}

/// Human plus one class per attack.
fn plda_classes<'a>(ivecs: &'a [(String, Vec<f64>)], index: &BTreeMap<&str, &ManifestRow>) -> Result<Vec<Vec<&'a [f64]>>> {
    let mut groups: BTreeMap<String, Vec<&[f64]>> = BTreeMap::new();
    for (id, w) in ivecs {
        let r = lookup(index, id)?;
        let key = match r.label {
            Label::Human => "human".to_string(),
            Label::Spoof => format!("spoof:{}", r.attack_id.as_deref().unwrap_or("-")),
        };
        groups.entry(key).or_default().push(w);
    }
    Ok(groups.into_values().collect())
}

fn normalized(ivecs: Ivecs, wccn: Option<&WccnTransform>) -> Result<Vec<(String, Vec<f64>)>> {
    ivecs
        .into_iter()
        .filter_map(|(id, w)| w.map(|w| (id, w)))
        .map(|(id, w)| Ok((id, wccn_apply(wccn, &w)?)))
        .collect()
}

fn cmd_train_plda(a: TrainPldaArgs) -> Result<()> {
    let manifest = Manifest::read(&a.manifest)?;
    let index = row_index(&manifest);
    let wccn = load_wccn(a.wccn.as_deref())?;
    let ivecs = normalized(read_ivecs(&a.ivecs)?, wccn.as_ref())?;
    let classes = plda_classes(&ivecs, &index)?;
    let model = train_plda(
        &classes,
        &PldaConfig {
            latent_dim: a.latent_dim,
            n_iter: a.iter,
        },
    )?;
    if model.degenerate {
        log::warn!("PLDA between-class covariance is degenerate; scores will be near zero");
    }
    model.write(&a.out)?;
    let ids: Vec<&str> = ivecs.iter().map(|(id, _)| id.as_str()).collect();
    write_train_list(&sidecar(&a.out), &ids)
}

fn trial(row: &ManifestRow, score: f64, condition: &str) -> TrialScore {
    TrialScore {
        utt_id: row.utt_id.clone(),
        score,
        label: row.label,
        attack_id: row.attack_id.clone(),
        condition: condition.to_string(),
    }
}

fn cmd_score_gmm(a: ScoreGmmArgs) -> Result<()> {
    let hint = format!(
        "spoofbench train-gmm --feature {} --out-dir {}",
        a.inputs.feature,
        a.model_dir.display()
    );
    let paths = ["natural.spgm", "synthetic.spgm", "train_utts.txt"].map(|p| a.model_dir.join(p));
    for p in &paths {
        require(p, &hint)?;
    }
    let (nat, syn) = (GmmModel::read(&paths[0])?, GmmModel::read(&paths[1])?);
    let manifest = Manifest::read(&a.inputs.manifest)?;
    let rows: Vec<&ManifestRow> = manifest.subset(a.subset).collect();
    let ids: Vec<&str> = rows.iter().map(|r| r.utt_id.as_str()).collect();
    check_disjoint(&read_train_list(&paths[2])?, &ids, &a.model_dir)?;
    let trials: Vec<TrialScore> = rows
        .par_iter()
        .map(|r| {
            let s = match load_features(&a.inputs, r)? {
                Some(f) => llr_score(&f, &nat, &syn)?,
                None => 0.0,
            };
            Ok(trial(r, s, &a.condition))
        })
        .collect::<Result<_>>()?;
    write_scores(&a.out, &ScoreSet::new(trials))
}

fn cmd_score_ivec(a: ScoreIvecArgs) -> Result<()> {
    let manifest = Manifest::read(&a.manifest)?;
    let index = row_index(&manifest);
    let wccn = load_wccn(a.wccn.as_deref())?;
    let train = normalized(read_ivecs(&a.train_ivecs)?, wccn.as_ref())?;
    let test = read_ivecs(&a.ivecs)?;
    let mut train_ids: HashSet<String> = train.iter().map(|(id, _)| id.clone()).collect();
    let test_ids: Vec<&str> = test.iter().map(|(id, _)| id.as_str()).collect();
    check_disjoint(&train_ids, &test_ids, &a.train_ivecs)?;
    let split = |l: Label| -> Result<Vec<&[f64]>> {
        let mut v = Vec::new();
        for (id, w) in &train {
            if lookup(&index, id)?.label == l {
                v.push(w.as_slice());
            }
        }
        Ok(v)
    };
    let (nat, syn) = (split(Label::Human)?, split(Label::Spoof)?);
    if nat.is_empty() || syn.is_empty() {
        return Err(Error::DegenerateTraining("training i-vectors must cover both labels".into()));
    }
    let scorer: Box<dyn Fn(&[f64]) -> Result<f64> + Sync> = match a.scoring {
        Scoring::Cosine => {
            let (mn, ms) = (class_mean(&nat)?, class_mean(&syn)?);
            Box::new(move |w| ivector_detection_score(w, &mn, &ms))
        }
        Scoring::Plda => {
            let p = a
                .plda
                .as_deref()
                .ok_or_else(|| Error::invalid("--scoring plda needs --plda <model>"))?;
            require(p, &format!("spoofbench train-plda --out {}", p.display()))?;
            let model = PldaModel::read(p)?;
            let side = sidecar(p);
            if side.exists() {
                train_ids.extend(read_train_list(&side)?);
                check_disjoint(&train_ids, &test_ids, p)?;
            }
            let mean = |v: &[&[f64]]| -> Vec<f64> {
                let mut m = vec![0.0; v[0].len()];
                v.iter().for_each(|x| m.iter_mut().zip(x.iter()).for_each(|(a, b)| *a += b));
                m.iter_mut().for_each(|a| *a /= v.len() as f64);
                m
            };
            let cn = model.enroll(&mean(&nat), nat.len())?;
            let cs = model.enroll(&mean(&syn), syn.len())?;
            Box::new(move |w| Ok(model.score(&cn, w)? - model.score(&cs, w)?))
        }
    };
    let trials: Vec<TrialScore> = test
        .par_iter()
        .map(|(id, w)| {
            let r = lookup(&index, id)?;
            let s = match w {
                Some(w) => scorer(&wccn_apply(wccn.as_ref(), w)?)?,
                None => 0.0,
            };
            Ok(trial(r, s, &a.condition))
        })
        .collect::<Result<_>>()?;
    write_scores(&a.out, &ScoreSet::new(trials))
}

fn system_id(p: &Path) -> String {
    let name = p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    name.strip_suffix(".tsv").unwrap_or(&name).to_string()
}

fn cmd_fuse(a: FuseArgs) -> Result<()> {
    let ids: Vec<String> = a.scores.iter().map(|p| system_id(p)).collect();
    let sets: Vec<ScoreSet> = a.scores.iter().map(|p| read_scores(p)).collect::<Result<_>>()?;
    let model = match a.method {
        FuseMethod::Avg => FusionModel::average(ids)?,
        FuseMethod::Logistic => {
            if a.dev_scores.len() != a.scores.len() {
                return Err(Error::invalid(format!(
                    "logistic fusion needs one --dev-scores file per system ({} given, {} expected)",
                    a.dev_scores.len(),
                    a.scores.len()
                )));
            }
            let dev: Vec<ScoreSet> = a.dev_scores.iter().map(|p| read_scores(p)).collect::<Result<_>>()?;
            let (m, log) = train_logistic_fusion(ids, &dev, a.l2)?;
            log::info!("fusion converged after {} iterations", log.objective.len().saturating_sub(1));
            m
        }
    };
    let fused = apply_fusion(&model, &sets)?;
    write_scores(&a.out, &fused)?;
    let model_path = a.model_out.unwrap_or_else(|| {
        let mut s = a.out.as_os_str().to_owned();
        s.push(".fusion");
        PathBuf::from(s)
    });
    model.write(&model_path)
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let scores = read_scores(&a.scores)?;
    let b = per_attack_eers(&scores, a.attacks.as_deref())?;
    let mut reports = vec![b.pooled.clone()];
    reports.extend(b.per_attack.iter().cloned());
    let mut text = reports_tsv(&reports);
    let _ = writeln!(text, "macro_all\t{:.2}\t\t", b.macro_all);
    if let Some((ids, v)) = &b.macro_subset {
        let _ = writeln!(text, "macro_{}\t{:.2}\t\t", ids.join("+"), v);
    }
    if let Some(p) = &a.det {
        let (tar, non) = scores.split();
        write_det_csv(p, &det_points(&tar, &non)?)?;
    }
    match &a.out {
        Some(p) => write_text(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_ltas(a: LtasArgs) -> Result<()> {
    let manifest = Manifest::read(&a.manifest)?;
    let cfg = FeatureConfig::new(FeatureKind::Mfcc);
    let rows: Vec<&ManifestRow> = manifest
        .rows
        .iter()
        .filter(|r| a.subset.is_none_or(|s| r.subset == s) && a.label.is_none_or(|l| r.label == l))
        .collect();
    if rows.is_empty() {
        return Err(Error::invalid("no manifest rows match the selection"));
    }
    let parts: Vec<(LtasProfile, u32)> = rows
        .par_iter()
        .filter_map(|r| {
            let sig = match read_wav(&manifest.resolve(r)) {
                Ok(s) => s,
                Err(e) => return Some(Err(e)),
            };
            match compute_ltas(&sig, &cfg) {
                Ok(p) => Some(Ok((p, sig.sample_rate()))),
                Err(Error::NoSpeech) => None,
                Err(e) => Some(Err(e)),
            }
        })
        .collect::<Result<_>>()?;
    let rate = parts.first().map(|p| p.1).ok_or(Error::NoSpeech)?;
    if parts.iter().any(|p| p.1 != rate) {
        return Err(Error::invalid("selected rows mix sample rates"));
    }
    let profiles: Vec<LtasProfile> = parts.into_iter().map(|p| p.0).collect();
    let merged = LtasProfile::merge(&profiles)?;
    let mut s = String::from("bin\tfreq_hz\tpower_db\n");
    for (k, db) in merged.to_db().iter().enumerate() {
        let f = k as f64 * rate as f64 / merged.dft_size as f64;
        let _ = writeln!(s, "{k}\t{f}\t{db}");
    }
    write_text(&a.out, &s)
}

fn cmd_toy(a: ToyArgs) -> Result<()> {
    let cfg = ToyCorpusConfig {
        n_train: a.n_train,
        n_dev: a.n_dev,
        n_eval: a.n_eval,
        ..ToyCorpusConfig::default()
    };
    let m = make_toy_corpus(a.seed, &a.out_dir, &cfg)?;
    println!("wrote {} utterances to {}", m.rows.len(), a.out_dir.join("manifest.tsv").display());
    Ok(())
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let cfg = ExperimentConfig::read(&a.config)?;
    let manifest = Manifest::read(&a.manifest)?;
    let summary = run_experiment(&cfg, &manifest, &a.out_dir)?;
    print!("{}", summary.summary_tsv());
    for (system, n) in &summary.empty_feature_utts {
        log::warn!("{system}: {n} utterances had no usable frames and were scored 0");
    }
    Ok(())
}
