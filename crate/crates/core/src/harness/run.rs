use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::{Backend, ExperimentConfig, FusionMode, NoiseCell};
use super::seed::{content_hash, derive_seed};
use crate::dsp::AudioSignal;
use crate::enhance::{enhance, EnhanceMethod};
use crate::error::{Error, Result};
use crate::eval::{per_attack_eers, write_det_csv, AttackBreakdown};
use crate::features::{compute_vad, extract_with_vad, FeatureConfig, FeatureKind};
use crate::fusion::{apply_fusion, fuse_average, train_logistic_fusion, FusionKind};
use crate::gmm::{llr_score, train_gmm, GmmModel};
use crate::io::{read_features, read_scores, read_wav, write_atomic, write_features, write_scores, Manifest, ManifestRow, Subset};
use crate::ivector::{
    baum_welch_stats, class_mean, extract_ivector, ivector_detection_score, length_normalize, train_plda, train_tv,
    train_wccn, PldaModel, TvMatrix, WccnTransform,
};
use crate::matrix::Matrix;
use crate::noise::{mix_at_snr, MixSpec};
use crate::scores::{Label, ScoreSet, TrialScore};

/// One evaluated (subset, condition, system, backend) cell.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub subset: Subset,
    pub condition: String,
    /// Feature name, or `fusion-average` / `fusion-logistic`.
    pub system: String,
    pub backend: Backend,
    pub breakdown: AttackBreakdown,
    pub score_path: PathBuf,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub cells: Vec<CellResult>,
    /// Utterances scored 0 because no feature frames survived, per system.
    pub empty_feature_utts: BTreeMap<String, usize>,
}

impl RunSummary {
    pub fn cell(&self, subset: Subset, condition: &str, system: &str, backend: Backend) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.subset == subset && c.condition == condition && c.system == system && c.backend == backend)
    }

    /// Pooled EER in percent.
    pub fn eer(&self, subset: Subset, condition: &str, system: &str, backend: Backend) -> Option<f64> {
        self.cell(subset, condition, system, backend).map(|c| c.breakdown.pooled.eer_percent)
    }

    pub fn summary_tsv(&self) -> String {
        let mut s = String::from("subset\tcondition\tsystem\tbackend\tn_target\tn_nontarget\tpooled_eer\tmacro_eer\tsubset_eer\n");
        for c in &self.cells {
            let b = &c.breakdown;
            let sub = b.macro_subset.as_ref().map(|(_, v)| format!("{v:.2}")).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}\t{:.2}\t{:.2}\t{}",
                c.subset, c.condition, c.system, c.backend, b.pooled.n_target, b.pooled.n_nontarget, b.pooled.eer_percent, b.macro_all, sub
            );
        }
        s
    }

    pub fn per_attack_tsv(&self) -> String {
        let mut s = String::from("subset\tcondition\tsystem\tbackend\tattack\teer\n");
        for c in &self.cells {
            for r in &c.breakdown.per_attack {
                let _ = writeln!(s, "{}\t{}\t{}\t{}\t{}\t{:.2}", c.subset, c.condition, c.system, c.backend, r.group, r.eer_percent);
            }
        }
        s
    }
}

#[derive(Debug, Clone)]
struct Condition {
    name: String,
    noise: Option<NoiseCell>,
    enhancement: Option<EnhanceMethod>,
}

fn noise_tag(cell: &NoiseCell) -> String {
    let kind: String = cell
        .kind
        .to_string()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '-' })
        .collect();
    format!("{kind}_{}dB", cell.snr_db)
}

fn conditions(cfg: &ExperimentConfig) -> Vec<Condition> {
    let mut base: Vec<(String, Option<NoiseCell>)> = Vec::new();
    if cfg.include_clean {
        base.push(("clean".into(), None));
    }
    for cell in &cfg.noise {
        base.push((noise_tag(cell), Some(cell.clone())));
    }
    let mut out = Vec::new();
    for (name, noise) in base {
        out.push(Condition {
            name: name.clone(),
            noise: noise.clone(),
            enhancement: None,
        });
        for m in &cfg.enhancement {
            out.push(Condition {
                name: format!("{name}+{m}"),
                noise: noise.clone(),
                enhancement: Some(*m),
            });
        }
    }
    out
}

struct Utt<'a> {
    row: &'a ManifestRow,
    signal: AudioSignal,
    hash: String,
}

fn load_utts<'a>(manifest: &Manifest, rows: &[&'a ManifestRow]) -> Result<Vec<Utt<'a>>> {
    rows.par_iter()
        .map(|row| {
            let path = manifest.resolve(row);
            let bytes = std::fs::read(&path).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
            let signal = read_wav(&path)?;
            Ok(Utt {
                row,
                signal,
                hash: content_hash(&[&bytes]),
            })
        })
        .collect()
}

fn utt_list_hash(utts: &[Utt<'_>]) -> String {
    let mut parts: Vec<Vec<u8>> = Vec::with_capacity(utts.len());
    for u in utts {
        parts.push(
            format!(
                "{}\t{}\t{}\t{}",
                u.row.utt_id,
                u.row.label,
                u.row.attack_id.as_deref().unwrap_or("-"),
                u.hash
            )
            .into_bytes(),
        );
    }
    let refs: Vec<&[u8]> = parts.iter().map(|p| p.as_slice()).collect();
    content_hash(&refs)
}

/// Per-feature back-end models trained on clean training data.
struct Models {
    train_ids: HashSet<String>,
    gmm: Option<(GmmModel, GmmModel)>,
    ivector: Option<IvectorModels>,
}

struct IvectorModels {
    ubm: GmmModel,
    tv: TvMatrix,
    wccn: WccnTransform,
    /// Re-normalized class means for cosine scoring (human, spoof).
    cos_means: (Vec<f64>, Vec<f64>),
    plda: Option<PldaScorer>,
}

struct PldaScorer {
    model: PldaModel,
    nat: crate::ivector::PldaClass,
    syn: crate::ivector::PldaClass,
}

impl IvectorModels {
    fn ivector(&self, f: &Matrix) -> Result<Vec<f64>> {
        let stats = baum_welch_stats(f, &self.ubm)?;
        let w = extract_ivector(&stats, &self.tv)?;
        length_normalize(&self.wccn.apply(&w)?)
    }
}

fn read_list(path: &Path) -> Result<Vec<String>> {
    Ok(std::fs::read_to_string(path)?.lines().map(String::from).collect())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, |w| {
        use std::io::Write;
        w.write_all(text.as_bytes())?;
        Ok(())
    })
}

fn vec_matrix(rows: &[&[f64]]) -> Result<Matrix> {
    Matrix::from_rows(rows[0].len(), rows.iter().map(|r| r.to_vec()))
}

/// Features of `utt` in `condition`, VAD taken from the clean recording.
fn features_in(
    utt: &Utt<'_>,
    cfg: &FeatureConfig,
    cond: &Condition,
    exp: &ExperimentConfig,
    cache: Option<&Path>,
) -> Result<Option<Matrix>> {
    let fp = cfg.fingerprint();
    let noise_fp = cond.noise.as_ref().map(|n| format!("{}@{}/{:?}", n.kind, n.snr_db, exp.level_method)).unwrap_or_default();
    let enh_fp = cond
        .enhancement
        .map(|m| format!("{m}/{:?}", exp.enhance))
        .unwrap_or_default();
    let seed = exp.seed.to_le_bytes();
    let key = content_hash(&[fp.as_bytes(), noise_fp.as_bytes(), enh_fp.as_bytes(), &seed, utt.row.utt_id.as_bytes(), utt.hash.as_bytes()]);
    let path = cache.map(|d| d.join(&key[..2]).join(format!("{key}.spbf")));
    let empty_marker = path.as_ref().map(|p| p.with_extension("empty"));
    if let (Some(p), Some(e)) = (&path, &empty_marker) {
        if p.exists() {
            return read_features(p).map(Some);
        }
        if e.exists() {
            return Ok(None);
        }
    }
    let mut signal = match &cond.noise {
        None => utt.signal.clone(),
        Some(cell) => {
            let spec = MixSpec {
                snr_db: cell.snr_db,
                level_method: exp.level_method,
            };
            let seed = derive_seed(exp.seed, &[&utt.row.utt_id, "noise", &noise_tag(cell)]);
            mix_at_snr(&utt.signal, &cell.kind.source()?, &spec, seed)?.signal
        }
    };
    if let Some(m) = cond.enhancement {
        signal = enhance(&signal, m, &exp.enhance)?;
    }
    let vad = compute_vad(&utt.signal, cfg)?;
    let out = match extract_with_vad(&signal, cfg, &vad) {
        Ok(f) if f.values.rows() > 0 => Some(f.values),
        Ok(_) | Err(Error::EmptyFeatures(_)) => None,
        Err(e) => return Err(e),
    };
    if let Some(p) = &path {
        std::fs::create_dir_all(p.parent().expect("cache path has a parent"))?;
        match &out {
            Some(m) => write_features(p, m)?,
            None => write_text(empty_marker.as_ref().expect("marker beside cache"), "")?,
        }
    }
    Ok(out)
}

fn train_models(
    kind: FeatureKind,
    fcfg: &FeatureConfig,
    exp: &ExperimentConfig,
    train: &[Utt<'_>],
    background: &[Utt<'_>],
    dir: &Path,
    cache: Option<&Path>,
) -> Result<Models> {
    let clean = Condition {
        name: "clean".into(),
        noise: None,
        enhancement: None,
    };
    let need_gmm = exp.backends.contains(&Backend::Gmm);
    let need_ivec = exp.backends.iter().any(|b| *b != Backend::Gmm);
    let need_plda = exp.backends.contains(&Backend::IvectorPlda);
    let key = content_hash(&[
        fcfg.fingerprint().as_bytes(),
        toml::to_string(&exp.gmm).unwrap_or_default().as_bytes(),
        toml::to_string(&exp.ivector).unwrap_or_default().as_bytes(),
        &exp.seed.to_le_bytes(),
        utt_list_hash(train).as_bytes(),
        utt_list_hash(background).as_bytes(),
    ]);
    let mdir = dir.join(kind.name()).join(&key[..16]);
    std::fs::create_dir_all(&mdir)?;
    let train_ids: HashSet<String> = train.iter().chain(background).map(|u| u.row.utt_id.clone()).collect();
    let ids_path = mdir.join("train_utts.txt");
    let mut sorted: Vec<&String> = train_ids.iter().collect();
    sorted.sort();
    write_text(&ids_path, &sorted.iter().map(|s| format!("{s}\n")).collect::<String>())?;

    let mut feats: Option<Vec<(Label, Option<String>, Matrix)>> = None;
    let get_feats = |set: &[Utt<'_>]| -> Result<Vec<(Label, Option<String>, Matrix)>> {
        let f: Vec<Option<Matrix>> = set.par_iter().map(|u| features_in(u, fcfg, &clean, exp, cache)).collect::<Result<_>>()?;
        let mut out = Vec::new();
        for (u, m) in set.iter().zip(f) {
            match m {
                Some(m) => out.push((u.row.label, u.row.attack_id.clone(), m)),
                None => log::warn!("{kind}: no frames for training utterance {}; skipped", u.row.utt_id),
            }
        }
        Ok(out)
    };

    let gmm = if need_gmm {
        let (pn, ps) = (mdir.join("natural.spgm"), mdir.join("synthetic.spgm"));
        if pn.exists() && ps.exists() {
            Some((GmmModel::read(&pn)?, GmmModel::read(&ps)?))
        } else {
            let f = match &feats {
                Some(f) => f,
                None => feats.insert(get_feats(train)?),
            };
            let nat: Vec<&Matrix> = f.iter().filter(|x| x.0 == Label::Human).map(|x| &x.2).collect();
            let syn: Vec<&Matrix> = f.iter().filter(|x| x.0 == Label::Spoof).map(|x| &x.2).collect();
            if nat.is_empty() || syn.is_empty() {
                return Err(Error::DegenerateTraining(format!("{kind}: a class has no usable training features")));
            }
            let (gn, _) = train_gmm(&nat, &exp.gmm.config(derive_seed(exp.seed, &[kind.name(), "gmm", "human"])))?;
            let (gs, _) = train_gmm(&syn, &exp.gmm.config(derive_seed(exp.seed, &[kind.name(), "gmm", "spoof"])))?;
            gn.write(&pn)?;
            gs.write(&ps)?;
            Some((gn, gs))
        }
    } else {
        None
    };

    let ivector = if need_ivec {
        let paths = ["ubm.spgm", "tv.sptv", "wccn.spwc", "cos_means.spbf"].map(|p| mdir.join(p));
        let plda_paths = ["plda.sppl", "plda_enroll.spbf", "plda_counts.txt"].map(|p| mdir.join(p));
        let cached = paths.iter().all(|p| p.exists()) && (!need_plda || plda_paths.iter().all(|p| p.exists()));
        if cached {
            let ubm = GmmModel::read(&paths[0])?;
            let tv = TvMatrix::read(&paths[1], &ubm)?;
            let wccn = WccnTransform::read(&paths[2])?;
            let cm = read_features(&paths[3])?;
            let plda = if need_plda {
                let model = PldaModel::read(&plda_paths[0])?;
                let em = read_features(&plda_paths[1])?;
                let counts = read_list(&plda_paths[2])?;
                let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::format(plda_paths[2].display().to_string(), "bad count"));
                let (nn, ns) = (parse(&counts[0])?, parse(&counts[1])?);
                Some(PldaScorer {
                    nat: model.enroll(em.row(0), nn)?,
                    syn: model.enroll(em.row(1), ns)?,
                    model,
                })
            } else {
                None
            };
            Some(IvectorModels {
                ubm,
                tv,
                wccn,
                cos_means: (cm.row(0).to_vec(), cm.row(1).to_vec()),
                plda,
            })
        } else {
            let f = match &feats {
                Some(f) => f,
                None => feats.insert(get_feats(train)?),
            };
            let bg = get_feats(background)?;
            let pool: Vec<&Matrix> = f.iter().chain(&bg).map(|x| &x.2).collect();
            let (ubm, _) = train_gmm(&pool, &exp.ivector.ubm(derive_seed(exp.seed, &[kind.name(), "ubm"])))?;
            let stats: Vec<_> = pool.par_iter().map(|m| baum_welch_stats(m, &ubm)).collect::<Result<_>>()?;
            let (tv, _) = train_tv(&stats, &ubm, &exp.ivector.tv(derive_seed(exp.seed, &[kind.name(), "tv"])))?;
            let raw: Vec<Vec<f64>> = stats[..f.len()].par_iter().map(|s| extract_ivector(s, &tv)).collect::<Result<_>>()?;
            let nat_raw: Vec<&[f64]> = raw.iter().zip(f).filter(|(_, x)| x.0 == Label::Human).map(|(w, _)| w.as_slice()).collect();
            let syn_raw: Vec<&[f64]> = raw.iter().zip(f).filter(|(_, x)| x.0 == Label::Spoof).map(|(w, _)| w.as_slice()).collect();
            let wccn = train_wccn(&[nat_raw, syn_raw])?;
            let normed: Vec<Vec<f64>> = raw.iter().map(|w| length_normalize(&wccn.apply(w)?)).collect::<Result<_>>()?;
            let nat: Vec<&[f64]> = normed.iter().zip(f).filter(|(_, x)| x.0 == Label::Human).map(|(w, _)| w.as_slice()).collect();
            let syn: Vec<&[f64]> = normed.iter().zip(f).filter(|(_, x)| x.0 == Label::Spoof).map(|(w, _)| w.as_slice()).collect();
            let cos_means = (class_mean(&nat)?, class_mean(&syn)?);
            ubm.write(&paths[0])?;
            tv.write(&paths[1])?;
            wccn.write(&paths[2])?;
            write_features(&paths[3], &vec_matrix(&[&cos_means.0, &cos_means.1])?)?;
            let plda = if need_plda {
                // classes: human plus one per attack
                let mut groups: BTreeMap<String, Vec<&[f64]>> = BTreeMap::new();
                for (w, x) in normed.iter().zip(f) {
                    let key = match x.0 {
                        Label::Human => "human".to_string(),
                        Label::Spoof => format!("spoof:{}", x.1.as_deref().unwrap_or("-")),
                    };
                    groups.entry(key).or_default().push(w);
                }
                let classes: Vec<Vec<&[f64]>> = groups.into_values().collect();
                let model = train_plda(&classes, &exp.ivector.plda())?;
                let raw_mean = |v: &[&[f64]]| -> Vec<f64> {
                    let mut m = vec![0.0; v[0].len()];
                    v.iter().for_each(|x| m.iter_mut().zip(x.iter()).for_each(|(a, b)| *a += b));
                    m.iter_mut().for_each(|a| *a /= v.len() as f64);
                    m
                };
                let (mn, ms) = (raw_mean(&nat), raw_mean(&syn));
                model.write(&plda_paths[0])?;
                write_features(&plda_paths[1], &vec_matrix(&[&mn, &ms])?)?;
                write_text(&plda_paths[2], &format!("{}\n{}\n", nat.len(), syn.len()))?;
                Some(PldaScorer {
                    nat: model.enroll(&mn, nat.len())?,
                    syn: model.enroll(&ms, syn.len())?,
                    model,
                })
            } else {
                None
            };
            Some(IvectorModels {
                ubm,
                tv,
                wccn,
                cos_means,
                plda,
            })
        }
    } else {
        None
    };
    // the stored list is what the hygiene check reads back
    let stored: HashSet<String> = read_list(&ids_path)?.into_iter().collect();
    Ok(Models {
        train_ids: stored,
        gmm,
        ivector,
    })
}

fn score_one(models: &Models, backend: Backend, f: &Matrix) -> Result<f64> {
    match backend {
        Backend::Gmm => {
            let (n, s) = models.gmm.as_ref().expect("gmm trained");
            llr_score(f, n, s)
        }
        Backend::IvectorCosine => {
            let iv = models.ivector.as_ref().expect("ivector trained");
            let w = iv.ivector(f)?;
            ivector_detection_score(&w, &iv.cos_means.0, &iv.cos_means.1)
        }
        Backend::IvectorPlda => {
            let iv = models.ivector.as_ref().expect("ivector trained");
            let p = iv.plda.as_ref().expect("plda trained");
            let w = iv.ivector(f)?;
            Ok(p.model.score(&p.nat, &w)? - p.model.score(&p.syn, &w)?)
        }
    }
}

fn check_hygiene(manifest: &Manifest, train: &[&ManifestRow], tested: &[&ManifestRow]) -> Result<()> {
    let labels: HashSet<Label> = train.iter().map(|r| r.label).collect();
    if labels.len() < 2 {
        return Err(Error::Hygiene("the train subset must contain both human and spoof rows".into()));
    }
    let ids: HashSet<&str> = train.iter().map(|r| r.utt_id.as_str()).collect();
    let paths: HashSet<PathBuf> = train.iter().map(|r| manifest.resolve(r)).collect();
    for r in tested {
        if ids.contains(r.utt_id.as_str()) || paths.contains(&manifest.resolve(r)) {
            return Err(Error::Hygiene(format!("{} utterance `{}` is also used for training", r.subset, r.utt_id)));
        }
    }
    Ok(())
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

fn score_dir(out: &Path, subset: Subset, cond: &str) -> PathBuf {
    out.join("scores").join(subset.to_string()).join(cond)
}

/// Runs the whole grid: clean-trained models per feature, every condition
/// on every requested subset, optional fusion, and EER reports.
pub fn run_experiment(config: &ExperimentConfig, manifest: &Manifest, out_dir: &Path) -> Result<RunSummary> {
    config.validate()?;
    manifest.validate()?;
    std::fs::create_dir_all(out_dir)?;
    write_text(&out_dir.join("config.toml"), &config.to_toml())?;

    let train_rows: Vec<&ManifestRow> = manifest
        .subset(Subset::Train)
        .filter(|r| {
            let clean = r.condition.as_deref().is_none_or(|c| c == "clean");
            if !clean {
                log::warn!("train row `{}` carries noise tag; excluded from model training", r.utt_id);
            }
            clean
        })
        .collect();
    let bg_rows: Vec<&ManifestRow> = manifest.subset(Subset::Background).collect();
    let mut test_rows: BTreeMap<Subset, Vec<&ManifestRow>> = BTreeMap::new();
    for s in &config.subsets {
        let rows: Vec<&ManifestRow> = manifest.subset(*s).collect();
        if rows.is_empty() {
            return Err(Error::invalid(format!("manifest has no {s} rows")));
        }
        test_rows.insert(*s, rows);
    }
    let all_test: Vec<&ManifestRow> = test_rows.values().flatten().copied().collect();
    check_hygiene(manifest, &train_rows, &all_test)?;
    if !bg_rows.is_empty() {
        check_hygiene(manifest, &[train_rows.clone(), bg_rows.clone()].concat(), &all_test)?;
    }

    let train = load_utts(manifest, &train_rows)?;
    let background = load_utts(manifest, &bg_rows)?;
    let tests: BTreeMap<Subset, Vec<Utt<'_>>> = test_rows
        .iter()
        .map(|(s, rows)| Ok((*s, load_utts(manifest, rows)?)))
        .collect::<Result<_>>()?;

    let cache = out_dir.join("cache");
    let feat_cache = cache.join("features");
    let conds = conditions(config);
    let mut cells = Vec::new();
    let mut empty: BTreeMap<String, usize> = BTreeMap::new();
    // (subset, condition, backend) -> feature -> scores
    let mut for_fusion: BTreeMap<(Subset, String, Backend), Vec<(String, ScoreSet)>> = BTreeMap::new();

    for &kind in &config.features {
        let fcfg = config.feature_config(kind)?;
        let models = train_models(kind, &fcfg, config, &train, &background, &cache.join("models"), Some(&feat_cache))?;
        for (subset, utts) in &tests {
            if let Some(u) = utts.iter().find(|u| models.train_ids.contains(&u.row.utt_id)) {
                return Err(Error::Hygiene(format!(
                    "{kind} models were trained on {subset} utterance `{}`",
                    u.row.utt_id
                )));
            }
        }
        for cond in &conds {
            for (subset, utts) in &tests {
                let cell_key = content_hash(&[
                    fcfg.fingerprint().as_bytes(),
                    format!("{cond:?}/{:?}/{:?}", config.level_method, config.enhance).as_bytes(),
                    toml::to_string(&config.gmm).unwrap_or_default().as_bytes(),
                    toml::to_string(&config.ivector).unwrap_or_default().as_bytes(),
                    &config.seed.to_le_bytes(),
                    utt_list_hash(&train).as_bytes(),
                    utt_list_hash(&background).as_bytes(),
                    utt_list_hash(utts).as_bytes(),
                ]);
                let dir = score_dir(out_dir, *subset, &cond.name);
                std::fs::create_dir_all(&dir)?;
                let paths: Vec<(Backend, PathBuf, PathBuf)> = config
                    .backends
                    .iter()
                    .map(|b| (*b, dir.join(format!("{kind}_{b}.tsv")), dir.join(format!(".{kind}_{b}.key"))))
                    .collect();
                let cached = paths
                    .iter()
                    .all(|(_, p, k)| p.exists() && std::fs::read_to_string(k).is_ok_and(|s| s == cell_key));
                let sets: Vec<(Backend, PathBuf, ScoreSet)> = if cached {
                    paths.into_iter().map(|(b, p, _)| Ok((b, p.clone(), read_scores(&p)?))).collect::<Result<_>>()?
                } else {
                    let feats: Vec<Option<Matrix>> = utts
                        .par_iter()
                        .map(|u| features_in(u, &fcfg, cond, config, Some(&feat_cache)))
                        .collect::<Result<_>>()?;
                    let mut out = Vec::new();
                    for (b, p, k) in paths {
                        let scores: Vec<f64> = feats
                            .par_iter()
                            .map(|f| f.as_ref().map_or(Ok(0.0), |m| score_one(&models, b, m)))
                            .collect::<Result<_>>()?;
                        let n_empty = feats.iter().filter(|f| f.is_none()).count();
                        if n_empty > 0 {
                            log::warn!("{kind}/{}/{subset}: {n_empty} utterances without frames scored 0", cond.name);
                            *empty.entry(kind.name().to_string()).or_default() += n_empty;
                        }
                        let set = ScoreSet::new(
                            utts.iter().zip(&scores).map(|(u, &s)| trial(u.row, s, &cond.name)).collect(),
                        );
                        write_scores(&p, &set)?;
                        write_text(&k, &cell_key)?;
                        out.push((b, p, set));
                    }
                    out
                };
                for (b, p, set) in sets {
                    cells.push(evaluate(config, out_dir, *subset, &cond.name, kind.name(), b, &set, p)?);
                    for_fusion
                        .entry((*subset, cond.name.clone(), b))
                        .or_default()
                        .push((kind.name().to_string(), set));
                }
            }
        }
    }

    if config.features.len() > 1 {
        fuse_cells(config, out_dir, &for_fusion, &mut cells)?;
    }

    let summary = RunSummary {
        out_dir: out_dir.to_path_buf(),
        cells,
        empty_feature_utts: empty,
    };
    let rdir = out_dir.join("reports");
    std::fs::create_dir_all(&rdir)?;
    write_text(&rdir.join("summary.tsv"), &summary.summary_tsv())?;
    write_text(&rdir.join("per_attack.tsv"), &summary.per_attack_tsv())?;
    Ok(summary)
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    config: &ExperimentConfig,
    out_dir: &Path,
    subset: Subset,
    condition: &str,
    system: &str,
    backend: Backend,
    set: &ScoreSet,
    score_path: PathBuf,
) -> Result<CellResult> {
    let breakdown = per_attack_eers(set, config.attack_subset.as_deref())?;
    let det = out_dir
        .join("reports")
        .join("det")
        .join(subset.to_string())
        .join(condition)
        .join(format!("{system}_{backend}.csv"));
    std::fs::create_dir_all(det.parent().expect("det path has a parent"))?;
    write_det_csv(&det, &breakdown.pooled.det_points)?;
    Ok(CellResult {
        subset,
        condition: condition.to_string(),
        system: system.to_string(),
        backend,
        breakdown,
        score_path,
    })
}

type FusionInputs = BTreeMap<(Subset, String, Backend), Vec<(String, ScoreSet)>>;

fn fuse_cells(config: &ExperimentConfig, out_dir: &Path, inputs: &FusionInputs, cells: &mut Vec<CellResult>) -> Result<()> {
    for method in &config.fusion.methods {
        let name = match method {
            FusionKind::Average => "fusion-average",
            FusionKind::Logistic => "fusion-logistic",
        };
        for ((subset, cond, backend), systems) in inputs {
            let ids: Vec<String> = systems.iter().map(|s| s.0.clone()).collect();
            let sets: Vec<ScoreSet> = systems.iter().map(|s| s.1.clone()).collect();
            let fused = match method {
                FusionKind::Average => fuse_average(&sets)?,
                FusionKind::Logistic => {
                    let dev: Vec<ScoreSet> = match config.fusion.mode {
                        FusionMode::OracleCondition => inputs
                            .get(&(Subset::Dev, cond.clone(), *backend))
                            .expect("dev scored")
                            .iter()
                            .map(|s| s.1.clone())
                            .collect(),
                        FusionMode::Pooled => {
                            let mut pooled: Vec<ScoreSet> = vec![ScoreSet::default(); ids.len()];
                            for ((s, _, b), sys) in inputs {
                                if *s == Subset::Dev && b == backend {
                                    for (acc, (_, set)) in pooled.iter_mut().zip(sys) {
                                        acc.trials.extend(set.trials.iter().map(|t| TrialScore {
                                            utt_id: format!("{}@{}", t.utt_id, t.condition),
                                            ..t.clone()
                                        }));
                                    }
                                }
                            }
                            pooled
                        }
                    };
                    let (model, _) = train_logistic_fusion(ids.clone(), &dev, config.fusion.l2)?;
                    let mdir = out_dir.join("reports").join("fusion");
                    std::fs::create_dir_all(&mdir)?;
                    model.write(&mdir.join(format!("{}_{}_{backend}.txt", config.fusion.mode, sanitize(cond))))?;
                    apply_fusion(&model, &sets)?
                }
            };
            let dir = score_dir(out_dir, *subset, cond);
            let label = if *method == FusionKind::Logistic {
                format!("{name}-{}", config.fusion.mode)
            } else {
                name.to_string()
            };
            let p = dir.join(format!("{label}_{backend}.tsv"));
            write_scores(&p, &fused)?;
            cells.push(evaluate(config, out_dir, *subset, cond, &label, *backend, &fused, p)?);
        }
    }
    Ok(())
}

fn sanitize(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '~' }).collect()
}
