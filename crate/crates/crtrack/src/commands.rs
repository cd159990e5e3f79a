//! Subcommand implementations, callable without going through the binary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crtrack_core::anu::{anu_run, quadratic_eval, synthetic_students, AnuState, ParamVector};
use crtrack_core::asa::{asa_assign, build_cost_matrix, pseudo_consistency_check};
use crtrack_core::association::{track_sequence, AssociationConfig, SimilarityMode};
use crtrack_core::augment::enhance;
use crtrack_core::metrics::{MetricAccumulator, MetricReport};
use crtrack_core::ssl_loss::{frame_loss, pseudo_filter, total_loss, BatchComposition, FrameBatch, LossBreakdown};
use crtrack_core::synth::{corrupt, generate_gt};

use crate::batch_files::{
    format_anu_history, format_asa_result, format_loss_rows, parse_anu_trace, parse_asa_input, parse_loss_batch,
};
use crate::config::{ScenarioKind, Settings};
use crate::emb::{attach, read_embeddings, records_of, write_embeddings};
use crate::error::{read_to_string, write_string, IoError, Result};
use crate::image_io::{read_image, write_image, ImageFormat};
use crate::mot::{read_mot, to_detections, to_gt_sequence, to_result_sequence, write_mot, MotRecord};

pub const EFFECTIVE_CONFIG: &str = "effective_config.txt";

/// Writes the effective configuration next to `output`.
pub fn echo_config(dir: &Path, settings: &Settings) -> Result<()> {
    write_string(&dir.join(EFFECTIVE_CONFIG), &settings.to_text())
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Per-sequence seed for the detection corruption, decorrelated from the
/// trajectory seed.
pub fn corruption_seed(seed: u64) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15
}

// ------------------------------------------------------------------ track

pub fn track_records(cfg: &AssociationConfig, dets: &[crtrack_core::Detection], last_frame: u32) -> Result<Vec<MotRecord>> {
    let out = track_sequence(cfg, dets, last_frame)?;
    Ok(out.iter().map(|(f, o)| MotRecord::result(*f, o.track_id as i64, &o.bbox, o.score)).collect())
}

pub fn load_detections(det: &Path, emb: Option<&Path>) -> Result<Vec<crtrack_core::Detection>> {
    let mut dets = to_detections(&read_mot(det)?)?;
    if let Some(p) = emb {
        let (_, rows) = read_embeddings(p)?;
        attach(&mut dets, &rows)?;
    }
    Ok(dets)
}

pub fn track(det: &Path, emb: Option<&Path>, out: &Path, settings: &Settings) -> Result<usize> {
    let dets = load_detections(det, emb)?;
    let last = dets.iter().map(|d| d.frame).max().unwrap_or(0);
    let records = track_records(&settings.tracker, &dets, last)?;
    write_mot(out, &records)?;
    echo_config(&parent_dir(out), settings)?;
    Ok(records.len())
}

// ------------------------------------------------------------------- eval

#[derive(Debug, Clone)]
pub struct SequenceFiles {
    pub name: String,
    pub gt: PathBuf,
    pub res: PathBuf,
}

fn gt_file_of(seq_dir: &Path) -> Option<PathBuf> {
    [seq_dir.join("gt").join("gt.txt"), seq_dir.join("gt.txt")].into_iter().find(|p| p.is_file())
}

fn list_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| IoError::file(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    v.sort();
    Ok(v)
}

/// Pairs sequences: either two files, or a ground-truth directory of
/// `SEQ/gt/gt.txt` with a results directory of `SEQ.txt`.
pub fn discover(gt: &Path, res: &Path) -> Result<Vec<SequenceFiles>> {
    if gt.is_file() {
        return Ok(vec![SequenceFiles { name: "sequence".into(), gt: gt.into(), res: res.into() }]);
    }
    let mut out = Vec::new();
    for d in list_dirs(gt)? {
        let Some(g) = gt_file_of(&d) else { continue };
        let name = d.file_name().unwrap().to_string_lossy().into_owned();
        let r = res.join(format!("{name}.txt"));
        if !r.is_file() {
            return Err(IoError::Format(format!("no results for sequence {name} (expected {})", r.display())));
        }
        out.push(SequenceFiles { name, gt: g, res: r });
    }
    if out.is_empty() {
        return Err(IoError::Format(format!("no sequences with ground truth under {}", gt.display())));
    }
    Ok(out)
}

pub const REPORT_COLUMNS: [&str; 12] =
    ["DetA", "MOTA", "HOTA", "IDF1", "AssA", "MOTP", "IDSW", "FP", "FN", "AP50", "AP50:95", "AR"];

fn report_cells(r: &MetricReport) -> Vec<String> {
    vec![
        format!("{:.3}", r.deta),
        format!("{:.3}", r.mota),
        format!("{:.3}", r.hota),
        format!("{:.3}", r.idf1),
        format!("{:.3}", r.assa),
        format!("{:.3}", r.motp),
        r.idsw.to_string(),
        r.fp.to_string(),
        r.fn_.to_string(),
        format!("{:.3}", r.ap50),
        format!("{:.3}", r.ap50_95),
        format!("{:.3}", r.ar),
    ]
}

/// Fixed-width table with a header row.
pub fn render_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut s = String::new();
    let mut line = |cells: Vec<&str>| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        s.push_str(parts.join("  ").trim_end());
        s.push('\n');
    };
    line(header.to_vec());
    for r in rows {
        line(r.iter().map(String::as_str).collect());
    }
    s
}

fn report_kv(name: &str, r: &MetricReport) -> String {
    let mut s = String::new();
    let fields: [(&str, String); 13] = [
        ("hota", r.hota.to_string()),
        ("deta", r.deta.to_string()),
        ("assa", r.assa.to_string()),
        ("mota", r.mota.to_string()),
        ("idf1", r.idf1.to_string()),
        ("motp", r.motp.to_string()),
        ("idsw", r.idsw.to_string()),
        ("fp", r.fp.to_string()),
        ("fn", r.fn_.to_string()),
        ("gt", r.gt_count.to_string()),
        ("ap50", r.ap50.to_string()),
        ("ap50_95", r.ap50_95.to_string()),
        ("ar", r.ar.to_string()),
    ];
    for (k, v) in fields {
        writeln!(s, "{name}.{k} = {v}").unwrap();
    }
    s
}

#[derive(Debug, Clone)]
pub struct EvalOutput {
    pub per_sequence: Vec<(String, MetricReport)>,
    pub combined: MetricReport,
    pub table: String,
    pub kv: String,
}

pub fn eval(gt: &Path, res: &Path, settings: &Settings) -> Result<EvalOutput> {
    let seqs = discover(gt, res)?;
    let mut combined = MetricAccumulator::default();
    let mut per_sequence = Vec::new();
    for s in &seqs {
        let g = to_gt_sequence(&read_mot(&s.gt)?)?;
        let r = to_result_sequence(&read_mot(&s.res)?)?;
        let mut acc = MetricAccumulator::default();
        acc.add_sequence(&g, &r, &settings.eval)?;
        combined.add_sequence(&g, &r, &settings.eval)?;
        per_sequence.push((s.name.clone(), acc.report()?));
    }
    let combined = combined.report()?;
    let mut header = vec!["sequence"];
    header.extend(REPORT_COLUMNS);
    let mut rows: Vec<Vec<String>> = per_sequence
        .iter()
        .map(|(n, r)| std::iter::once(n.clone()).chain(report_cells(r)).collect())
        .collect();
    rows.push(std::iter::once("COMBINED".to_string()).chain(report_cells(&combined)).collect());
    let mut kv = String::new();
    for (n, r) in &per_sequence {
        kv.push_str(&report_kv(n, r));
    }
    kv.push_str(&report_kv("COMBINED", &combined));
    Ok(EvalOutput { per_sequence, combined, table: render_table(&header, &rows), kv })
}

// ------------------------------------------------------------------ synth

#[derive(Debug, Clone)]
pub struct SynthSequence {
    pub name: String,
    pub gt: Vec<MotRecord>,
    pub det: Vec<crtrack_core::Detection>,
}

pub fn sequence_name(i: usize) -> String {
    format!("synth-{:02}", i + 1)
}

/// Generates `settings.synth.sequences` scenarios; sequence `i` uses seed
/// `seed + i`.
pub fn synth_sequences(settings: &Settings, seed: u64) -> Result<Vec<SynthSequence>> {
    let mut out = Vec::new();
    for i in 0..settings.synth.sequences {
        let s = seed.wrapping_add(i as u64);
        let spec = settings.synth.scenario(s)?;
        let gt = generate_gt(&spec)?;
        let mut model = settings.synth.corruption;
        model.seed = corruption_seed(s);
        let dets = corrupt(&gt, &model, settings.synth.emb_dim, (spec.arena_width, spec.arena_height))?;
        let gt_records = gt
            .records()
            .iter()
            .map(|r| MotRecord::ground_truth(r.frame, r.id as i64, &r.bbox, r.class, r.visibility))
            .collect();
        out.push(SynthSequence {
            name: sequence_name(i),
            gt: gt_records,
            det: dets.into_iter().map(|d| d.detection).collect(),
        });
    }
    Ok(out)
}

pub fn write_synth(out: &Path, seqs: &[SynthSequence], settings: &Settings) -> Result<()> {
    for s in seqs {
        let dir = out.join(&s.name);
        write_mot(&dir.join("gt").join("gt.txt"), &s.gt)?;
        let det: Vec<MotRecord> = s.det.iter().map(|d| MotRecord::detection(d.frame, &d.bbox, d.score)).collect();
        write_mot(&dir.join("det").join("det.txt"), &det)?;
        write_embeddings(&dir.join("det").join("det.emb.csv"), settings.synth.emb_dim, &records_of(&s.det))?;
    }
    echo_config(out, settings)
}

pub fn synth(out: &Path, settings: &Settings, seed: u64) -> Result<Vec<SynthSequence>> {
    let seqs = synth_sequences(settings, seed)?;
    write_synth(out, &seqs, settings)?;
    Ok(seqs)
}

// ----------------------------------------------------------------- ablate

/// Appearance variant of one ablation row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AppearanceVariant {
    Off,
    PlainProduct,
    SplitCosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AblationFlags {
    pub appearance: AppearanceVariant,
    pub second_stage: bool,
}

impl AblationFlags {
    pub fn grid() -> Vec<AblationFlags> {
        let mut v = Vec::new();
        for appearance in [AppearanceVariant::Off, AppearanceVariant::PlainProduct, AppearanceVariant::SplitCosine] {
            for second_stage in [false, true] {
                v.push(AblationFlags { appearance, second_stage });
            }
        }
        v
    }

    pub fn apply(&self, base: &AssociationConfig) -> AssociationConfig {
        let mut c = *base;
        c.second_stage_enabled = self.second_stage;
        match self.appearance {
            AppearanceVariant::Off => c.appearance_weight = 0.0,
            AppearanceVariant::PlainProduct => c.similarity_mode = SimilarityMode::PlainProduct,
            AppearanceVariant::SplitCosine => c.similarity_mode = SimilarityMode::SplitCosine,
        }
        if self.appearance != AppearanceVariant::Off && c.appearance_weight == 0.0 {
            c.appearance_weight = AssociationConfig::default().appearance_weight;
        }
        c
    }
}

pub const ABLATION_HEADER: [&str; 9] = ["App.", "SCD", "OCR", "DetA", "MOTA", "HOTA", "IDF1", "AssA", "IDSW"];

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub flags: AblationFlags,
    pub report: MetricReport,
}

impl AblationRow {
    pub fn cells(&self) -> Vec<String> {
        let mark = |b: bool| if b { "on" } else { "off" }.to_string();
        let r = &self.report;
        vec![
            mark(self.flags.appearance != AppearanceVariant::Off),
            mark(self.flags.appearance == AppearanceVariant::SplitCosine),
            mark(self.flags.second_stage),
            format!("{:.3}", r.deta),
            format!("{:.3}", r.mota),
            format!("{:.3}", r.hota),
            format!("{:.3}", r.idf1),
            format!("{:.3}", r.assa),
            r.idsw.to_string(),
        ]
    }
}

/// The benchmark `ablate` uses unless told otherwise: crossing scenarios
/// under moderate low-light corruption.
pub fn benchmark_preset() -> Settings {
    let mut s = Settings::default();
    s.synth.kind = ScenarioKind::Crossing;
    s.synth.crossing_pairs = 3;
    s.synth.n_objects = 8;
    s.synth.duration = 120;
    s.synth.sequences = 10;
    s.synth.corruption.severity = 0.6;
    s
}

fn ablation_row(
    flags: AblationFlags,
    seqs: &[(crtrack_core::metrics::GtSequence, Vec<crtrack_core::Detection>)],
    settings: &Settings,
) -> Result<AblationRow> {
    let cfg = flags.apply(&settings.tracker);
    let mut acc = MetricAccumulator::default();
    for (gt, dets) in seqs {
        let last = gt.records().iter().map(|r| r.frame).chain(dets.iter().map(|d| d.frame)).max().unwrap_or(0);
        let res = to_result_sequence(&track_records(&cfg, dets, last)?)?;
        acc.add_sequence(gt, &res, &settings.eval)?;
    }
    Ok(AblationRow { flags, report: acc.report()? })
}

/// One row per grid configuration, each evaluated on its own thread; the
/// output order is the grid order.
pub fn ablate_sequences(
    seqs: &[(crtrack_core::metrics::GtSequence, Vec<crtrack_core::Detection>)],
    settings: &Settings,
) -> Result<Vec<AblationRow>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = AblationFlags::grid()
            .into_iter()
            .map(|flags| scope.spawn(move || ablation_row(flags, seqs, settings)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("ablation worker panicked")).collect()
    })
}

/// Loads `DIR/SEQ/{gt/gt.txt, det/det.txt, det/det.emb.csv}` sequences.
pub fn load_benchmark(dir: &Path) -> Result<Vec<(crtrack_core::metrics::GtSequence, Vec<crtrack_core::Detection>)>> {
    let mut out = Vec::new();
    for d in list_dirs(dir)? {
        let Some(g) = gt_file_of(&d) else { continue };
        let det = d.join("det").join("det.txt");
        let emb = d.join("det").join("det.emb.csv");
        let dets = load_detections(&det, emb.is_file().then_some(emb.as_path()))?;
        out.push((to_gt_sequence(&read_mot(&g)?)?, dets));
    }
    if out.is_empty() {
        return Err(IoError::Format(format!("no sequences under {}", dir.display())));
    }
    Ok(out)
}

pub fn ablate(data: Option<&Path>, settings: &Settings, seed: u64) -> Result<(Vec<AblationRow>, String)> {
    let seqs = match data {
        Some(d) => load_benchmark(d)?,
        None => synth_sequences(settings, seed)?
            .into_iter()
            .map(|s| Ok((to_gt_sequence(&s.gt)?, s.det)))
            .collect::<Result<Vec<_>>>()?,
    };
    let rows = ablate_sequences(&seqs, settings)?;
    let cells: Vec<Vec<String>> = rows.iter().map(AblationRow::cells).collect();
    Ok((rows, render_table(&ABLATION_HEADER, &cells)))
}

// ---------------------------------------------------------------- augment

#[derive(Debug, Clone)]
pub struct AugmentedFile {
    pub input: PathBuf,
    pub output: PathBuf,
    pub params: crtrack_core::augment::AugmentParams,
}

/// Image `i` (in file-name order) uses seed `seed + i`.
pub fn augment(input: &Path, output: &Path, settings: &Settings, seed: u64) -> Result<Vec<AugmentedFile>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(input)
        .map_err(|e| IoError::file(input, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && ImageFormat::from_path(p).is_some())
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(IoError::Format(format!("no .ppm or .png images in {}", input.display())));
    }
    std::fs::create_dir_all(output).map_err(|e| IoError::file(output, e))?;
    let mut done = Vec::new();
    let mut log = String::from("file,contrast,brightness_scale,blur_sigma,gamma,noise_sigma,seed\n");
    for (i, f) in files.iter().enumerate() {
        let img = read_image(f)?;
        let params = settings.augment.sample(seed.wrapping_add(i as u64));
        let out_img = enhance(&img, &params)?;
        let target = output.join(f.file_name().unwrap());
        write_image(&target, &out_img)?;
        writeln!(
            log,
            "{},{},{},{},{},{},{}",
            f.file_name().unwrap().to_string_lossy(),
            params.contrast,
            params.brightness_scale,
            params.blur_sigma,
            params.gamma,
            params.noise_sigma,
            params.seed
        )
        .unwrap();
        done.push(AugmentedFile { input: f.clone(), output: target, params });
    }
    write_string(&output.join("augment_params.csv"), &log)?;
    echo_config(output, settings)?;
    Ok(done)
}

// -------------------------------------------------------------------- asa

pub fn asa(input: &Path, settings: &Settings) -> Result<String> {
    let (preds, pseudos) = parse_asa_input(&read_to_string(input)?)?;
    let cost = build_cost_matrix(&preds, &pseudos, &settings.asa_weights, &settings.asa, settings.image_diag)?;
    let result = asa_assign(&cost, &settings.asa);
    let violations =
        pseudo_consistency_check(&preds, &pseudos, &settings.asa_weights, &settings.asa, settings.image_diag, &result)?;
    Ok(format_asa_result(&cost, &result, &violations))
}

// --------------------------------------------------------------- ssl-loss

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub frames: Vec<(bool, LossBreakdown)>,
    pub l_labeled: f64,
    pub l_unlabeled: f64,
    pub lambda_u: f64,
    pub total: f64,
}

impl LossReport {
    pub fn to_text(&self) -> String {
        let mut s = format_loss_rows(&self.frames);
        writeln!(s, "l_labeled = {}", self.l_labeled).unwrap();
        writeln!(s, "l_unlabeled = {}", self.l_unlabeled).unwrap();
        writeln!(s, "lambda_u = {}", self.lambda_u).unwrap();
        writeln!(s, "total = {}", self.total).unwrap();
        s
    }
}

pub fn ssl_loss_text(text: &str, settings: &Settings) -> Result<LossReport> {
    let frames = parse_loss_batch(text)?;
    let mut rows = Vec::new();
    let (mut sum_l, mut n_l, mut sum_u, mut n_u) = (0.0, 0usize, 0.0, 0usize);
    for f in frames {
        let mut targets = f.targets.clone();
        targets.extend(pseudo_filter(&f.teacher, settings.pseudo_threshold)?);
        let batch = FrameBatch::assigned(f.preds, targets, &settings.asa_weights, &settings.asa, settings.image_diag)?;
        let l = frame_loss(&batch.preds, &batch.targets, &batch.assignment, &settings.loss, settings.image_diag)?;
        if f.labeled {
            sum_l += l.total;
            n_l += 1;
        } else {
            sum_u += l.total;
            n_u += 1;
        }
        rows.push((f.labeled, l));
    }
    let comp = BatchComposition::new(n_l, n_u)?;
    let l_labeled = sum_l / n_l as f64;
    let l_unlabeled = if n_u == 0 { 0.0 } else { sum_u / n_u as f64 };
    Ok(LossReport {
        frames: rows,
        l_labeled,
        l_unlabeled,
        lambda_u: settings.unlabeled_weight.lambda(&comp),
        total: total_loss(l_unlabeled, l_labeled, &comp, settings.unlabeled_weight),
    })
}

pub fn ssl_loss(input: &Path, settings: &Settings) -> Result<LossReport> {
    ssl_loss_text(&read_to_string(input)?, settings)
}

// ---------------------------------------------------------------- anu-sim

/// Replays recorded evaluations through the update rule.
pub fn anu_replay(text: &str) -> Result<String> {
    let trace = parse_anu_trace(text)?;
    let mut state = AnuState::with_initial_eval(ParamVector(Vec::new()), trace.initial);
    let student = ParamVector(Vec::new());
    for &(t, s) in &trace.epochs {
        state.apply_evals(&student, t, s)?;
    }
    Ok(format_anu_history(trace.initial, &state.history))
}

/// Runs the rule on a seeded quadratic benchmark of dimension `dim`.
pub fn anu_quadratic(dim: usize, epochs: usize, noise: f64, settings: &Settings, seed: u64) -> Result<String> {
    if dim == 0 || epochs == 0 {
        return Err(IoError::Format("dim and epochs must be positive".into()));
    }
    let target: Vec<f64> = (0..dim).map(|i| 1.0 + i as f64 / dim as f64).collect();
    let start = ParamVector(vec![0.0; dim]);
    let students = synthetic_students(&start, &target, epochs, noise, seed)?;
    let mut eval = quadratic_eval(&target);
    let m = settings.ema.epoch_keep_rate();
    let state = anu_run(start.clone(), &students, &mut eval, m)?;
    let initial = quadratic_eval(&target)(&start);
    Ok(format_anu_history(initial, &state.history))
}
