//! The whole desk-scale pipeline in one run: synthesize clips, build the
//! dataset at five qps, train the three desk models, then post-process and
//! in-loop sweeps on a held-out clip and a BD report against the plain
//! codec. Everything lands in the output directory.
//!
//!     cargo run --release --example desk_pipeline -- out/ [epochs]

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use paqe::codec::{encode_sequence, write_artifacts, EncoderConfig};
use paqe::enhance::{enhance_sequence, PostMethod};
use paqe::frame_io::write_raw_video;
use paqe::ilf::{run_ilf_sweep, sweep_frames_csv, IlfMode};
use paqe::metrics::{compare, mean_psnr, plot_csv, psnr, report_csv, write_rd_csv, RdRow};
use paqe::synth::{generate_clip, synthetic_corpus, ClipSpec};
use paqe::training::{
    generate_dataset, save_dataset, train_triple, write_loss_curve, DatasetConfig, Profile, TrainSchedule,
};

fn io(path: &PathBuf, text: String) -> paqe::Result<()> {
    fs::write(path, text).map_err(|e| paqe::Error::Io {
        path: path.clone(),
        source: e,
    })
}

fn main() -> paqe::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "desk_run".into()));
    let epochs = args.next().map(|s| s.parse().expect("epochs")).unwrap_or(50);
    fs::create_dir_all(out.join("clips")).map_err(|e| paqe::Error::Io {
        path: out.clone(),
        source: e,
    })?;
    let started = Instant::now();

    let enc = EncoderConfig {
        gop_size: 8,
        intra_period: 16,
        ..EncoderConfig::default()
    };
    let qps = [22u8, 27, 32, 37, 42];

    // 1. clips
    let corpus = synthetic_corpus(8, 64, 64, 17, 1000);
    for (name, frames) in &corpus {
        write_raw_video(frames, out.join("clips").join(format!("{name}.yuv")))?;
    }

    // 2. dataset: every clip at five qps
    let dcfg = DatasetConfig {
        qps: qps.to_vec(),
        frames_per_video: 6,
        all_intra_frames: 6,
        seed: 0,
    };
    let ds = generate_dataset(&corpus, &enc, &dcfg)?;
    save_dataset(&ds, out.join("dataset"))?;
    let (train, val) = ds.split_videos(&[corpus[7].0.clone()]);
    println!("dataset: {} intra, {} inter frames", ds.intra.len(), ds.inter.len());

    // 3. training
    let t = Instant::now();
    let schedule = TrainSchedule {
        epochs,
        ..TrainSchedule::desk()
    };
    let trained = train_triple(&train, &val, Profile::Desk, &schedule)?;
    let models = trained.models;
    models.save(out.join("models"))?;
    for (name, c) in [("intra", &trained.intra), ("inter", &trained.inter), ("unaware", &trained.unaware)] {
        write_loss_curve(c, out.join("models").join(format!("{name}.loss.csv")))?;
    }
    println!("training: {:.0}s", t.elapsed().as_secs_f64());

    // 4. post-processing on a clip no model has seen
    let test = generate_clip(&ClipSpec::new(64, 64, 25, 5000));
    let mut rows = Vec::new();
    for &qp in &qps {
        let cfg = enc.clone().with_qp(qp);
        let t = Instant::now();
        let coded = encode_sequence(&test, &cfg)?;
        let t_codec = t.elapsed().as_secs_f64();
        write_artifacts(&coded, &out, &format!("test_qp{qp}"))?;
        let bits = coded.total_bits() as f64;
        let quality = |frames: &[paqe::frame_io::Frame420]| -> paqe::Result<f64> {
            let v = frames.iter().zip(&test).map(|(a, b)| psnr(&a.y, &b.y)).collect::<paqe::Result<Vec<_>>>()?;
            Ok(mean_psnr(&v).unwrap_or(f64::INFINITY))
        };
        rows.push(RdRow {
            label: "REF".into(),
            qp,
            rate_bits: bits,
            quality: quality(&coded.recon)?,
            seconds: Some(t_codec),
        });
        for (label, method) in [("PP_AWARE", PostMethod::Aware), ("PP_UNAWARE", PostMethod::Unaware)] {
            let t = Instant::now();
            let e = enhance_sequence(&coded.recon, Some(&coded.pred), &coded.meta, &models, method)?;
            rows.push(RdRow {
                label: label.into(),
                qp,
                rate_bits: bits,
                quality: quality(&e)?,
                seconds: Some(t_codec + t.elapsed().as_secs_f64()),
            });
        }
    }
    write_rd_csv(&rows, out.join("pp.rd.csv"))?;

    // 5. in-loop sweep
    let sweep = run_ilf_sweep(&test, &enc, Some(&models), &qps[1..], &IlfMode::ALL)?;
    io(&out.join("ilf.frames.csv"), sweep_frames_csv(&sweep.frames))?;
    write_rd_csv(&sweep.rd, out.join("ilf.rd.csv"))?;

    // 6. report
    for (name, table) in [("pp", rows), ("ilf", sweep.rd)] {
        let tables = vec![("test5000".to_string(), table)];
        let report = report_csv(&compare(&tables, "REF")?);
        io(&out.join(format!("{name}.report.csv")), report.clone())?;
        io(&out.join(format!("{name}.plot.csv")), plot_csv(&tables))?;
        println!("{name}:\n{report}");
    }
    println!("done in {:.0}s, results in {}", started.elapsed().as_secs_f64(), out.display());
    Ok(())
}
