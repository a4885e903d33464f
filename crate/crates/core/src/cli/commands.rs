use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::snapshot::{render, SNAPSHOT_FILE};
use super::{
    AssembleArgs, Command, DynamicsModel, EvalArgs, GenArgs, ModelKind, ProliferationArgs, RankArgs, SimulateArgs,
    SweepArgs, TrainArgs, WeightArgs,
};
use crate::assembly::{assemble as assemble_candidate, coverage_report, SupertypeRequirement};
use crate::dynamics::{
    classify_outcome, convergence_ratio, dose_sweep, line_plot_svg, log_grid, simulate_cd8, simulate_proliferation,
    Cd8Params, Exhaustion, ImmuneState, PlotSeries, ProliferationParams,
};
use crate::metrics::{pr_csv, pr_curve, roc_csv, roc_curve, ConfusionMatrix, MetricReport};
use crate::numcore::{load_checkpoint, AdamConfig};
use crate::pipeline::{
    generate_candidates, samples_fasta, score_epitopes, scores_csv, train_autoencoder_selector, train_cnn_classifier,
    train_gan, AutoencoderSelector, CnnClassifier, EpitopeScorer, RankWeights, SelectorScore, AUTOENCODER_KIND,
    CNN_KIND,
};
use crate::predictor::{train_model1, LossWeights, Model1, TrainConfig, TrainReport, MODEL1_KIND};
use crate::seqdata::{
    load_records, split_dataset, write_records, Dataset, EpitopeRecord, Peptide, RecordFormat, SyntheticConfig,
};
use crate::{Error, Result};

const CHECKPOINT_DIR: &str = "checkpoint";

/// The only place commands write to.
struct OutDir(PathBuf);

impl OutDir {
    fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(OutDir(dir.to_path_buf()))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }

    fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.path(name);
        std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))
    }

    fn snapshot(&self, cmd: Command) -> Result<()> {
        self.write(SNAPSHOT_FILE, render(&cmd)?)
    }
}

fn load(path: &Path) -> Result<Dataset> {
    Ok(load_records(path, RecordFormat::from_path(path))?)
}

fn records_csv(records: &[EpitopeRecord]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_records(records, RecordFormat::Csv, &mut buf)?;
    Ok(buf)
}

pub(super) fn gen(a: &GenArgs) -> Result<()> {
    let motif: Peptide = a.motif.parse()?;
    let cfg = SyntheticConfig {
        peptide_len: a.length,
        ..SyntheticConfig::new(a.n, motif, a.signal, a.seed)
    };
    let data = cfg.generate()?;
    let dir = match a.out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let snap = a.out.with_extension(SNAPSHOT_FILE);
    std::fs::write(&snap, render(&Command::Gen(a.clone()))?).map_err(|e| Error::io(&snap, e))?;

    let mut buf = Vec::new();
    write_records(&data.records, RecordFormat::from_path(&a.out), &mut buf)?;
    std::fs::write(&a.out, buf).map_err(|e| Error::io(&a.out, e))?;
    println!("wrote {} records to {}", data.len(), a.out.display());
    Ok(())
}

fn train_config(a: &TrainArgs) -> Result<TrainConfig> {
    let patience = match a.patience.as_str() {
        "none" => None,
        s => Some(
            s.parse()
                .map_err(|_| Error::invalid(format!("patience must be an integer or \"none\", got {s:?}")))?,
        ),
    };
    let cfg = TrainConfig {
        weights: LossWeights {
            alpha: a.alpha,
            beta: a.beta,
            gamma: a.gamma,
        },
        adam: AdamConfig::default().with_learning_rate(a.learning_rate),
        dropout: a.dropout,
        epochs: a.epochs,
        patience,
        tol: a.tol,
        batch_size: a.batch_size,
        seed: a.seed,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn report_line(kind: &str, r: &TrainReport) -> String {
    let last = r.epochs_run() - 1;
    format!(
        "{kind}: epochs={} best_epoch={} train_loss={:.4} val_loss={:.4} train_acc={:.4} val_acc={:.4}",
        r.epochs_run(),
        r.best_epoch,
        r.train_loss[last],
        r.val_loss[last],
        r.train_accuracy[last],
        r.val_accuracy[last]
    )
}

pub(super) fn train(a: &TrainArgs) -> Result<()> {
    let cfg = train_config(a)?;
    let data = split_dataset(load(&a.data)?, a.train_fraction, a.seed)?;
    let out = OutDir::create(&a.out)?;
    out.snapshot(Command::Train(a.clone()))?;
    let heldout: Vec<EpitopeRecord> = data.test().into_iter().flatten().cloned().collect();
    out.write("heldout.csv", records_csv(&heldout)?)?;
    let ckpt = out.path(CHECKPOINT_DIR);

    let report = match a.model {
        ModelKind::Model1 => {
            let (m, r) = train_model1(&data, &cfg)?;
            m.save(&ckpt, Some(&cfg.adam))?;
            r
        }
        ModelKind::Cnn => {
            let (m, r) = train_cnn_classifier(&data, &cfg)?;
            m.save(&ckpt)?;
            r
        }
        ModelKind::Autoencoder => {
            let (m, r) = train_autoencoder_selector(&data, a.latent_dim, &cfg)?;
            m.save(&ckpt)?;
            r
        }
        ModelKind::Gan => return train_gan_cmd(a, &cfg, &data, &heldout, &out),
    };
    out.write("report.csv", report.to_csv())?;
    out.write("summary.json", report.summary_json())?;
    println!("{}", report_line(&format!("{:?}", a.model).to_lowercase(), &report));
    Ok(())
}

fn positives<'a>(records: impl IntoIterator<Item = &'a EpitopeRecord>) -> Vec<Peptide> {
    records.into_iter().filter(|r| r.immunogenic).map(|r| r.peptide.clone()).collect()
}

fn train_gan_cmd(a: &TrainArgs, cfg: &TrainConfig, data: &Dataset, heldout: &[EpitopeRecord], out: &OutDir) -> Result<()> {
    let real = positives(data.train().into_iter().flatten());
    let gan = train_gan(&real, cfg)?;
    gan.save(out.path(CHECKPOINT_DIR))?;
    out.write("gan_log.csv", gan.log_csv())?;
    let candidates = generate_candidates(&gan, a.candidates, a.seed)?;
    out.write("candidates.fasta", samples_fasta(&candidates))?;

    let probe_real: Vec<Peptide> = positives(heldout).into_iter().filter(|p| p.len() == gan.config.peptide_len).collect();
    let probe_accuracy = if probe_real.is_empty() {
        None
    } else {
        let fake = gan.sample_stochastic(probe_real.len(), a.seed.wrapping_add(1))?;
        Some(gan.discriminator_accuracy(&probe_real, &fake)?)
    };
    let last = gan.log.last().expect("at least one epoch");
    let summary = serde_json::json!({
        "epochs_run": gan.log.len(),
        "final_disc_loss": last.disc_loss,
        "final_gen_loss": last.gen_loss,
        "probe_accuracy": probe_accuracy,
    });
    out.write("summary.json", serde_json::to_string_pretty(&summary)? + "\n")?;
    println!(
        "gan: epochs={} disc_loss={:.4} gen_loss={:.4} probe_acc={}",
        gan.log.len(),
        last.disc_loss,
        last.gen_loss,
        probe_accuracy.map_or("n/a".into(), |p| format!("{p:.4}"))
    );
    for (i, s) in candidates.iter().enumerate() {
        println!("  {}. {} realism={:.4}", i + 1, s.peptide, s.realism);
    }
    Ok(())
}

fn parse_counts(spec: &str) -> Result<ConfusionMatrix> {
    let mut cm = [None; 4];
    for part in spec.split(',') {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("expected key=count, got {part:?}")))?;
        let slot = match k.trim() {
            "tp" => 0,
            "tn" => 1,
            "fp" => 2,
            "fn" => 3,
            other => return Err(Error::invalid(format!("unknown count {other:?}; use tp, tn, fp, fn"))),
        };
        let n: u64 = v.trim().parse().map_err(|_| Error::invalid(format!("bad count {v:?}")))?;
        if cm[slot].replace(n).is_some() {
            return Err(Error::invalid(format!("{k} given twice")));
        }
    }
    match cm {
        [Some(tp), Some(tn), Some(fp), Some(fn_)] => Ok(ConfusionMatrix::new(tp, tn, fp, fn_)),
        _ => Err(Error::invalid("all four counts tp, tn, fp, fn are required")),
    }
}

fn checkpoint_kind(dir: &Path) -> Result<String> {
    if dir.join("generator").is_dir() {
        return Ok(crate::pipeline::GAN_KIND.into());
    }
    let ck = load_checkpoint(dir)?;
    ck.model
        .get("kind")
        .and_then(|k| k.as_str())
        .map(String::from)
        .ok_or_else(|| Error::invalid(format!("{}: checkpoint has no model kind", dir.display())))
}

/// Accepts either a checkpoint directory or a `train` output directory.
fn resolve_checkpoint(dir: &Path) -> PathBuf {
    let nested = dir.join(CHECKPOINT_DIR);
    if nested.is_dir() {
        nested
    } else {
        dir.to_path_buf()
    }
}

fn load_scorer(dir: &Path) -> Result<Box<dyn EpitopeScorer>> {
    let dir = resolve_checkpoint(dir);
    match checkpoint_kind(&dir)?.as_str() {
        MODEL1_KIND => Ok(Box::new(Model1::load(&dir)?)),
        CNN_KIND => Ok(Box::new(CnnClassifier::load(&dir)?)),
        AUTOENCODER_KIND => Ok(Box::new(AutoencoderSelector::load(&dir)?)),
        other => Err(Error::invalid(format!("{other} checkpoints cannot score epitopes"))),
    }
}

pub(super) fn eval(a: &EvalArgs) -> Result<()> {
    let out;
    let report = if let Some(spec) = &a.from_counts {
        let cm = parse_counts(spec)?;
        let report = MetricReport::from_counts(cm, a.threshold)?;
        out = OutDir::create(&a.out)?;
        out.snapshot(Command::Eval(a.clone()))?;
        report
    } else {
        let (Some(ckpt), Some(data)) = (&a.checkpoint, &a.data) else {
            return Err(Error::invalid("eval needs --checkpoint and --data, or --from-counts"));
        };
        let scorer = load_scorer(ckpt)?;
        let data = load(data)?;
        let labels: Vec<bool> = data.records.iter().map(|r| r.immunogenic).collect();
        let probs: Vec<f64> = scorer.score_peptides(&data.peptides())?.into_iter().map(|(p, _)| p).collect();
        let report = MetricReport::from_scores(&labels, &probs, a.threshold)?;
        out = OutDir::create(&a.out)?;
        out.snapshot(Command::Eval(a.clone()))?;
        if let Ok(roc) = roc_curve(&labels, &probs) {
            out.write("roc.csv", roc_csv(&roc))?;
        }
        if let Ok(pr) = pr_curve(&labels, &probs, a.pr_points) {
            out.write("pr.csv", pr_csv(&pr))?;
        }
        report
    };
    out.write("metrics.json", serde_json::to_string_pretty(&report)? + "\n")?;
    out.write("confusion.csv", report.confusion.to_csv())?;
    let opt = |x: Option<f64>| x.map_or("undefined".to_string(), |v| format!("{v:.4}"));
    let mut line = format!(
        "n={} accuracy={:.4} precision={} recall={} f1={}",
        report.n,
        report.accuracy,
        opt(report.precision),
        opt(report.recall),
        opt(report.f1)
    );
    if let Some(auc) = report.roc_auc {
        let _ = write!(line, " roc_auc={auc:.4}");
    }
    println!("{line}");
    Ok(())
}

fn scored_pool(data: &Path, checkpoint: Option<&Path>, w: &WeightArgs) -> Result<Vec<SelectorScore>> {
    let records = load(data)?.records;
    if records.is_empty() {
        return Err(Error::invalid(format!("{}: empty epitope pool", data.display())));
    }
    let scorer = checkpoint.map(load_scorer).transpose()?;
    let weights = RankWeights {
        imm: w.w_imm,
        cons: w.w_cons,
        rec: w.w_rec,
    };
    score_epitopes(scorer.as_deref(), &records, &weights)
}

pub(super) fn rank(a: &RankArgs) -> Result<()> {
    let ranked = scored_pool(&a.data, a.checkpoint.as_deref(), &a.weights)?;
    let out = OutDir::create(&a.out)?;
    out.snapshot(Command::Rank(a.clone()))?;
    out.write("ranked.csv", scores_csv(&ranked))?;
    for (i, s) in ranked.iter().enumerate() {
        println!("{:>3}. {:<15} {:.4}", i + 1, s.peptide(), s.priority);
    }
    Ok(())
}

pub(super) fn assemble(a: &AssembleArgs) -> Result<()> {
    let ranked = scored_pool(&a.data, a.checkpoint.as_deref(), &a.weights)?;
    let req = SupertypeRequirement::with_required(a.require.iter().map(|s| s.trim()));
    let candidate = assemble_candidate(&ranked, &req, a.k)?;
    let out = OutDir::create(&a.out)?;
    out.snapshot(Command::Assemble(a.clone()))?;
    out.write("ranked.csv", scores_csv(&ranked))?;
    out.write("candidate.json", candidate.to_json())?;
    let report = coverage_report(&candidate, &req);
    out.write("coverage.txt", &report)?;
    print!("{report}");
    Ok(())
}

fn prolif_params(p: &ProliferationArgs, h: f64, days: f64) -> ProliferationParams {
    ProliferationParams {
        rho: p.rho,
        h,
        t0_cells: p.cells,
        duration_days: days,
        exhaustion: p.k_ex.map(|k_ex| Exhaustion { k_ex, n_ex: p.n_ex }),
    }
}

pub(super) fn simulate(a: &SimulateArgs) -> Result<()> {
    match a.model {
        DynamicsModel::Prolif => {
            let params = prolif_params(&a.prolif, a.h, a.days.unwrap_or(7.0));
            if !(a.antigen >= 0.0 && a.antigen.is_finite()) {
                return Err(Error::invalid(format!("antigen must be finite and non-negative, got {}", a.antigen)));
            }
            let antigen = a.antigen;
            let traj = simulate_proliferation(&params, |_| antigen, a.step)?;
            let out = OutDir::create(&a.out)?;
            out.snapshot(Command::Simulate(a.clone()))?;
            out.write("trajectory.csv", traj.to_csv())?;
            if a.svg {
                let series = PlotSeries {
                    label: "T".into(),
                    points: traj.times.iter().copied().zip(traj.t_cells.iter().copied()).collect(),
                };
                out.write("trajectory.svg", line_plot_svg("T-cell proliferation", "days", "T cells", &[series], false))?;
            }
            println!("final T = {}", traj.final_count());
        }
        DynamicsModel::Cd8 => {
            let params = Cd8Params {
                beta_t: a.beta_t,
                beta_tv: a.beta_tv,
                p: a.p,
                k_ie: a.k_ie,
                rho_i: a.rho_i,
                c_v: a.c_v,
            };
            let init = ImmuneState {
                t_cells: a.t0,
                infected: a.i0,
                effectors: a.e0,
                virus: a.v0,
            };
            let days = a.days.unwrap_or(30.0);
            let traj = simulate_cd8(&params, init, days, a.step)?;
            let ratio = if a.check_convergence {
                Some(convergence_ratio(&params, init, days, a.step)?)
            } else {
                None
            };
            let outcome = classify_outcome(&traj, a.detection_limit);
            let out = OutDir::create(&a.out)?;
            out.snapshot(Command::Simulate(a.clone()))?;
            out.write("trajectory.csv", traj.to_csv())?;
            let last = traj.states.last().expect("trajectory is never empty");
            let summary = serde_json::json!({
                "outcome": outcome,
                "final": last,
                "convergence_ratio": ratio,
            });
            out.write("summary.json", serde_json::to_string_pretty(&summary)? + "\n")?;
            if a.svg {
                let pick = |f: fn(&ImmuneState) -> f64, label: &str| PlotSeries {
                    label: label.into(),
                    points: traj.times.iter().zip(&traj.states).map(|(t, s)| (*t, f(s))).collect(),
                };
                let series = [
                    pick(|s| s.t_cells, "T"),
                    pick(|s| s.infected, "I"),
                    pick(|s| s.effectors, "E"),
                    pick(|s| s.virus, "V"),
                ];
                out.write("trajectory.svg", line_plot_svg("CD8 dynamics", "days", "level", &series, false))?;
            }
            println!("outcome: {outcome}");
            if let Some(r) = ratio {
                println!("convergence ratio (step {} vs {}): {r:.3}", a.step, a.step / 2.0);
            }
        }
    }
    Ok(())
}

pub(super) fn sweep(a: &SweepArgs) -> Result<()> {
    let grid = log_grid(a.antigen_min, a.antigen_max, a.points)?;
    let mut curves = Vec::with_capacity(a.h.len());
    for &h in &a.h {
        curves.push((h, dose_sweep(&prolif_params(&a.prolif, h, a.days), &grid, a.step)?));
    }
    let out = OutDir::create(&a.out)?;
    out.snapshot(Command::Sweep(a.clone()))?;
    let mut csv = String::from("h,antigen,final_T\n");
    for (h, pts) in &curves {
        for (x, t) in pts {
            let _ = writeln!(csv, "{h},{x},{t}");
        }
    }
    out.write("sweep.csv", csv)?;
    if a.svg {
        let series: Vec<PlotSeries> = curves
            .iter()
            .map(|(h, pts)| PlotSeries {
                label: format!("h={h}"),
                points: pts.clone(),
            })
            .collect();
        out.write("sweep.svg", line_plot_svg("Final T cells vs antigen", "antigen", "final T", &series, true))?;
    }
    for (h, pts) in &curves {
        // first grid point reaching half of the curve's range
        let lo = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let mid = pts.iter().find(|p| p.1 >= (lo + hi) / 2.0).map_or(f64::NAN, |p| p.0);
        println!("h={h}: half-maximal final T at antigen {mid:.3e}");
    }
    Ok(())
}
