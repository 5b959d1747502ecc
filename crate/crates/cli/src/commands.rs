use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use structcov::denoise::{denoise, mse, write_denoise_csv, DenoiseRow};
use structcov::estimator::{evaluate, evaluate_ground_truth, fit, CondRegressor, Head, TrainRecord};
use structcov::metrics::{read_csv, summarize, with_full_nll, write_csv};
use structcov::synthdata::{read_dataset, record_rng, standard_normals, SsynWriter};
use structcov::{LinearReconstructor, SynthRecord, TrainConfig};

use crate::output::{create_dir, plot_signal, write_atomic, write_panels, write_text};
use crate::args::*;
use crate::UsageError;

const PLOT_HEIGHT: usize = 64;

pub fn run(spec: ExperimentSpec) -> Result<()> {
    match spec.command {
        Command::Gen(a) => gen(&a),
        Command::Fit(a) => fit_cmd(&a),
        Command::Eval(a) => eval(&a),
        Command::Sample(a) => sample(&a),
        Command::Denoise(a) => denoise_cmd(&a),
        Command::Report(a) => report(&a),
    }
}

fn load(path: &Path) -> Result<Vec<SynthRecord<f64>>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let recs = read_dataset(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))?;
    if recs.is_empty() {
        bail!("{} holds no records", path.display());
    }
    Ok(recs)
}

fn load_train(path: &Path) -> Result<Vec<TrainRecord<f64>>> {
    Ok(load(path)?.into_iter().map(|r| r.into_train(true)).collect())
}

fn load_model(path: &Path) -> Result<CondRegressor<f64>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    CondRegressor::read_from(BufReader::new(f)).with_context(|| format!("reading checkpoint {}", path.display()))
}

fn gen(a: &GenArgs) -> Result<()> {
    let ds = a.dataset()?;
    let n = ds.dim();
    write_atomic(&a.out, |w| {
        let mut sw = SsynWriter::new(w, n, a.count)?;
        for i in a.start..a.start + a.count {
            sw.push(&ds.record::<f64>(i)?)?;
        }
        sw.finish()?;
        Ok(())
    })?;
    eprintln!("wrote {} records of dimension {n} to {}", a.count, a.out.display());
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.17e}")).unwrap_or_default()
}

fn fit_cmd(a: &FitArgs) -> Result<()> {
    let cfg: TrainConfig = a.train.config()?;
    let train = load_train(&a.data)?;
    let n = train[0].mean.len();
    let shape = a.dataset.map(|d| grid_for(d, n)).transpose()?;
    let head: Head = a.head.head(n, shape)?;
    let test = match &a.test {
        Some(p) => load_train(p)?,
        None => Vec::new(),
    };
    let mut reg = CondRegressor::new(n, &a.train.hidden, head, a.train.seed)?;
    let rep = fit(&mut reg, &train, &test, &cfg)?;

    write_atomic(&a.model, |w| Ok(reg.write_to(w)?))?;
    write_atomic(&a.out, |w| {
        writeln!(w, "epoch,train_nll,test_nll,test_kl,test_frob,wall_seconds")?;
        for (e, v) in rep.epoch_nll.iter().enumerate() {
            writeln!(w, "{},{v:.17e},,,,", e + 1)?;
        }
        writeln!(
            w,
            "final,{},{},{},{},{:.3}",
            fmt_opt(rep.epoch_nll.last().copied()),
            fmt_opt(rep.test_nll),
            fmt_opt(rep.test_kl),
            fmt_opt(rep.test_frobenius),
            rep.wall_seconds
        )?;
        Ok(())
    })?;
    eprintln!(
        "trained {} parameters for {} epochs in {:.1} s; final train NLL {:.4}",
        reg.param_count(),
        rep.epoch_nll.len(),
        rep.wall_seconds,
        rep.epoch_nll.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn eval(a: &EvalArgs) -> Result<()> {
    let records = load_train(&a.data)?;
    let n = records[0].mean.len();
    let mut rows = match &a.model {
        Some(m) => evaluate(&load_model(m)?, &records)?,
        None => evaluate_ground_truth(&records)?,
    };
    if a.full_nll {
        rows = with_full_nll(&rows, n);
    }
    write_atomic(&a.out, |w| Ok(write_csv(w, &rows)?))?;
    let s = summarize(&rows);
    eprintln!("{} records: NLL {}", s.count, s.nll);
    Ok(())
}

fn sample(a: &SampleArgs) -> Result<()> {
    if a.count == 0 {
        return Err(UsageError("--count must be at least 1".into()).into());
    }
    let records = load(&a.data)?;
    let reg = load_model(&a.model)?;
    let n = records[0].dim();
    let shape = grid_for(a.dataset, n)?;
    create_dir(&a.out)?;
    for (i, rec) in records.iter().take(a.count).enumerate() {
        let pred = reg.predict_gaussian(&rec.mean, &rec.mean)?;
        let u: Vec<f64> = standard_normals(&mut record_rng(a.seed, i as u64), n);
        let drawn = pred.sample(&u)?;
        let path = a.out.join(format!("sample_{i:04}.pgm"));
        match a.dataset {
            DatasetKind::Ellipses => {
                write_panels(&path, shape.width, shape.height, &[&rec.mean, &rec.sample, &drawn])?
            }
            DatasetKind::Splines => {
                let all = rec.mean.iter().chain(&rec.sample).chain(&drawn);
                let lo = all.clone().copied().fold(f64::INFINITY, f64::min);
                let hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
                let plots: Vec<Vec<f64>> = [&rec.mean, &rec.sample, &drawn]
                    .iter()
                    .map(|v| plot_signal(v, lo, hi, PLOT_HEIGHT))
                    .collect();
                let refs: Vec<&[f64]> = plots.iter().map(Vec::as_slice).collect();
                write_panels(&path, n, PLOT_HEIGHT, &refs)?
            }
        }
    }
    eprintln!("wrote {} triptychs to {}", a.count.min(records.len()), a.out.display());
    Ok(())
}

fn denoise_cmd(a: &DenoiseArgs) -> Result<()> {
    let cfg = TrainConfig {
        learning_rate: a.lr,
        epochs: a.epochs,
        batch_size: a.batch,
        seed: a.seed,
        ..TrainConfig::default()
    };
    cfg.validate().map_err(|e| UsageError(e.to_string()))?;
    if a.noise_sigma < 0.0 || !a.noise_sigma.is_finite() {
        return Err(UsageError("--noise-sigma must be a nonnegative number".into()).into());
    }
    let train_images: Vec<Vec<f64>> = load(&a.train)?.into_iter().map(|r| r.sample).collect();
    let clean: Vec<Vec<f64>> = load(&a.data)?.into_iter().map(|r| r.sample).collect();
    let n = train_images[0].len();
    if clean[0].len() != n {
        bail!("train images have {n} pixels but test images have {}", clean[0].len());
    }
    let shape = grid_for(DatasetKind::Ellipses, n)?;
    let k = a.k.unwrap_or(n / 4);
    if k == 0 || k > n {
        return Err(UsageError(format!("--k must lie in 1..={n}")).into());
    }
    if a.recon_rank == 0 || a.recon_rank > n {
        return Err(UsageError(format!("--recon-rank must lie in 1..={n}")).into());
    }
    let head = Head::sparse(shape, a.patch).map_err(|e| UsageError(e.to_string()))?;

    let recon = LinearReconstructor::fit(&train_images, a.recon_rank)?;
    let train = train_images
        .iter()
        .map(|x| recon.train_record(x))
        .collect::<structcov::Result<Vec<_>>>()?;
    let mut reg = CondRegressor::new(a.recon_rank, &a.hidden, head, a.seed)?;
    fit(&mut reg, &train, &[], &cfg)?;

    create_dir(&a.out)?;
    let mut rows = Vec::with_capacity(clean.len());
    for (i, x) in clean.iter().enumerate() {
        let eps: Vec<f64> = standard_normals(&mut record_rng(a.seed ^ 0x6e6f_6973_65, i as u64), n);
        let noisy: Vec<f64> = x.iter().zip(&eps).map(|(c, e)| c + a.noise_sigma * e).collect();
        let d = denoise(&noisy, &recon, &reg, k)?;
        rows.push(DenoiseRow {
            record_id: i,
            mse_noisy: mse(&noisy, x)?,
            mse_denoised: mse(&d.output, x)?,
        });
        if i < a.images {
            let path = a.out.join(format!("denoise_{i:04}.pgm"));
            write_panels(&path, shape.width, shape.height, &[x, &noisy, &d.output])?;
        }
    }
    write_atomic(&a.out.join("denoise.csv"), |w| Ok(write_denoise_csv(w, &rows)?))?;
    let mean = |f: fn(&DenoiseRow) -> f64| rows.iter().map(f).sum::<f64>() / rows.len() as f64;
    eprintln!(
        "{} images, k = {k}: mean MSE noisy {:.4}, denoised {:.4}",
        rows.len(),
        mean(|r| r.mse_noisy),
        mean(|r| r.mse_denoised)
    );
    Ok(())
}

fn report(a: &ReportArgs) -> Result<()> {
    let mut table = String::from("model,count,nll,kl_to_gt,frob_to_gt\n");
    for p in &a.inputs {
        let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
        let rows = read_csv(BufReader::new(f)).with_context(|| format!("reading {}", p.display()))?;
        let s = summarize(&rows);
        let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let cell = |s: Option<structcov::metrics::Stat>| s.map(|s| s.to_string()).unwrap_or_default();
        table.push_str(&format!("{name},{},{},{},{}\n", s.count, s.nll, cell(s.kl), cell(s.frobenius)));
    }
    write_text(&a.out, &table)?;
    print!("{table}");
    Ok(())
}
