//! Worked examples for every evaluation metric: classification counts,
//! box IoU, sentence BLEU with clipping and brevity penalty, and ROUGE-L.
//!
//! Run with: `cargo run --example metrics_tour`

use medfuse::heads::BBox;
use medfuse::metrics::{bleu, classification_metrics, iou, mean_iou, rouge_l};

fn main() -> medfuse::Result<()> {
    // Classification: hand-checkable confusion matrix.
    let y_true = [1, 1, 1, 0, 0];
    let y_pred = [1, 1, 0, 0, 1];
    let m = classification_metrics(&y_true, &y_pred, 2)?;
    println!(
        "accuracy {:.3}, macro recall {:.5}, macro precision {:.5}, macro F1 {:.5}",
        m.accuracy, m.recall_macro, m.precision_macro, m.f1_macro
    );

    // IoU: the quarter-overlap construction gives exactly 1/7.
    let a = BBox::new(0.0, 0.0, 0.5, 0.5)?;
    let b = BBox::new(0.25, 0.25, 0.75, 0.75)?;
    println!("iou(quarter overlap) = {:.6} (= 1/7)", iou(&a, &b));
    println!("mean over identity and 1/7: {:.6}", mean_iou(&[(a, a), (a, b)])?);

    // BLEU: clipping caps repeated n-grams, brevity penalizes short output.
    // candidate "a a" vs reference "a b c": clipped p1 = 1/2, BP = e^(-1/2).
    let candidate = [0usize, 0];
    let reference = [0usize, 1, 2];
    println!("bleu(\"a a\" vs \"a b c\", n=1) = {:.5}", bleu(&candidate, &reference, 1)?);
    // Identical sequences score 1 at any order.
    println!("bleu(identical, n=2) = {}", bleu(&reference, &reference, 2)?);

    // ROUGE-L via the longest common subsequence.
    println!(
        "rouge_l(\"a b c\" vs \"a c d\") = {:.5} (LCS 2, F1 = 2/3)",
        rouge_l(&[0, 1, 2], &[0, 2, 3])?
    );
    Ok(())
}
