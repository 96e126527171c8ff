//! Cllr, AUC, error rates and a Tippett curve for a small hand-made set of
//! likelihood ratios, plus the verbal scale with and without the cap.

use mixlr::calibrate::LRValue;
use mixlr::metrics::{cap_lr, cllr, metric_report, tippett, verbal_scale};

fn main() -> mixlr::Result<()> {
    let h1: Vec<LRValue> = [2.0, 1.5, 0.5, 3.0, 2.5, 1.2, 0.0, 1.8].into_iter().map(LRValue::from_log10).collect();
    let h2: Vec<LRValue> = [-2.0, -1.0, 0.3, -3.0, -0.5, -1.5].into_iter().map(LRValue::from_log10).collect();
    println!("Cllr {:.4}", cllr(&h1, &h2)?);
    let neutral = vec![LRValue::from_log10(0.0); 4];
    println!("Cllr of LR = 1 everywhere {:.4}", cllr(&neutral, &neutral)?);

    let all: Vec<LRValue> = h1.iter().chain(&h2).copied().collect();
    let flags: Vec<bool> = (0..all.len()).map(|i| i < h1.len()).collect();
    let m = metric_report(&all, &flags)?;
    println!("AUC {:.3}  FP {:.3}  FN {:.3}", m.auc, m.fp_rate, m.fn_rate);

    let t = tippett(&h1, &h2)?;
    println!("threshold  H1>t   H2>t");
    for x in [-2.5, -1.0, 0.0, 1.0, 2.0] {
        let (a, b) = t.at(x);
        println!("{x:>9.1}  {a:.3}  {b:.3}");
    }

    for l in [-4.0, -1.5, 0.0, 1.0, 2.5, 5.0] {
        let lr = LRValue::from_log10(l);
        println!("log10 LR {l:+.1}: {}  (capped: {})", verbal_scale(lr), verbal_scale(cap_lr(lr, 100.0)?));
    }
    Ok(())
}
