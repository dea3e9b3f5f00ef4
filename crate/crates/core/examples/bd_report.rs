//! Bjøntegaard delta rate, ΔPSNR and runtime ratio on hand-made RD data.

use paqe::metrics::{bd_rate, compare, delta_psnr, report_csv, rt_ratio, RdPoint, RdRow, RunRecord};

fn main() -> paqe::Result<()> {
    let anchor = [(22, 9000.0, 41.2), (27, 5200.0, 38.3), (32, 2900.0, 35.4), (37, 1600.0, 32.6)];
    let test = [(22, 8500.0, 41.3), (27, 4900.0, 38.4), (32, 2750.0, 35.5), (37, 1520.0, 32.7)];
    let pts = |c: &[(u8, f64, f64)]| c.iter().map(|&(_, r, q)| RdPoint::new(r, q)).collect::<Vec<_>>();
    println!("BD-rate {:+.3}%", bd_rate(&pts(&anchor), &pts(&test))?);

    let records: Vec<RunRecord> = anchor
        .iter()
        .zip(&test)
        .map(|(a, t)| RunRecord {
            sequence: "demo".into(),
            qp: a.0,
            psnr_prop: t.2,
            psnr_ref: a.2,
            rt_prop: 1.3,
            rt_ref: 1.0,
        })
        .collect();
    println!("ΔPSNR {:+.3} dB, RT {:.2}", delta_psnr(&records)?, rt_ratio(&records)?);

    let rows: Vec<RdRow> = [("REF", &anchor), ("PROP", &test)]
        .iter()
        .flat_map(|(label, c)| {
            c.iter().map(move |&(qp, rate_bits, quality)| RdRow {
                label: label.to_string(),
                qp,
                rate_bits,
                quality,
                seconds: None,
            })
        })
        .collect();
    print!("{}", report_csv(&compare(&[("demo".into(), rows)], "REF")?));
    Ok(())
}
