//! In-loop enhancement under every configuration at four qps, with BD rates
//! against the plain encoder.
//!
//!     cargo run --release --example ilf_sweep -- models/ [out.rd.csv]

use paqe::codec::EncoderConfig;
use paqe::enhance::ModelTriple;
use paqe::ilf::{run_ilf_sweep, IlfMode};
use paqe::metrics::{bd_rate, write_rd_csv, RdPoint};
use paqe::synth::{generate_clip, ClipSpec};

fn main() -> paqe::Result<()> {
    let mut args = std::env::args().skip(1);
    let models = ModelTriple::load(args.next().unwrap_or_else(|| "models".into()))?;
    let clip = generate_clip(&ClipSpec::new(64, 64, 25, 5000));
    let enc = EncoderConfig {
        gop_size: 8,
        intra_period: 16,
        ..EncoderConfig::default()
    };
    let sweep = run_ilf_sweep(&clip, &enc, Some(&models), &[27, 32, 37, 42], &IlfMode::ALL)?;
    let pts = |m| -> Vec<RdPoint> {
        sweep.rd_for(m).iter().map(|r| RdPoint::new(r.rate_bits, r.quality)).collect()
    };
    let anchor = pts(IlfMode::Ref);
    let reference = sweep.mean_quality(IlfMode::Ref).unwrap_or(0.0);
    println!("{:<9} {:>10} {:>9} {:>8}", "mode", "BD-rate", "ΔY-PSNR", "flags");
    for m in IlfMode::ALL {
        let flags = sweep.frames.iter().filter(|f| f.mode == m && f.flag).count();
        let dq = sweep.mean_quality(m).unwrap_or(0.0) - reference;
        match bd_rate(&anchor, &pts(m)) {
            Ok(bd) => println!("{:<9} {bd:>9.2}% {dq:>+9.3} {flags:>8}", m.label()),
            Err(e) => println!("{:<9} {e}", m.label()),
        }
    }
    if let Some(path) = args.next() {
        write_rd_csv(&sweep.rd, path)?;
    }
    Ok(())
}
