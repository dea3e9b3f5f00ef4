//! Build a training set from synthetic clips and train the three desk
//! models. Writes weights and loss curves to the given directory.
//!
//!     cargo run --release --example train_desk -- models/ [epochs]

use paqe::codec::EncoderConfig;
use paqe::synth::synthetic_corpus;
use paqe::training::{generate_dataset, train_triple, write_loss_curve, DatasetConfig, Profile, TrainSchedule};

fn main() -> paqe::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "models".into());
    let epochs = args.next().map(|s| s.parse().expect("epochs")).unwrap_or(50);

    let enc = EncoderConfig {
        gop_size: 8,
        intra_period: 16,
        ..EncoderConfig::default()
    };
    let corpus = synthetic_corpus(8, 64, 64, 17, 1000);
    let held = vec![corpus[7].0.clone()];
    let ds = generate_dataset(
        &corpus,
        &enc,
        &DatasetConfig {
            frames_per_video: 6,
            all_intra_frames: 6,
            ..DatasetConfig::default()
        },
    )?;
    let (train, val) = ds.split_videos(&held);
    println!("{} intra + {} inter training frames", train.intra.len(), train.inter.len());

    let schedule = TrainSchedule {
        epochs,
        ..TrainSchedule::desk()
    };
    let t = std::time::Instant::now();
    let res = train_triple(&train, &val, Profile::Desk, &schedule)?;
    println!("trained in {:.0}s", t.elapsed().as_secs_f64());
    res.models.save(&out)?;
    for (name, curve) in [("intra", &res.intra), ("inter", &res.inter), ("unaware", &res.unaware)] {
        let best = curve.iter().map(|e| e.val_l1).fold(f64::INFINITY, f64::min);
        println!("{name:>8}: best val L1 {best:.5}");
        write_loss_curve(curve, format!("{out}/{name}.loss.csv"))?;
    }
    Ok(())
}
