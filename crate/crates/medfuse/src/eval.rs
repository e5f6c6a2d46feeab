//! Model evaluation over a corpus: classification metrics, mean box IoU,
//! and generation quality (sentence BLEU and ROUGE-L averaged over cases).

use crate::error::{Error, Result};
use crate::metrics::{bleu, classification_metrics, iou, rouge_l, EvalReport};
use crate::model::Model;
use crate::synthdata::{CaseRecord, EOS};

/// BLEU order used in reports.
pub const EVAL_BLEU_MAX_N: usize = 2;

/// Which tasks to evaluate; unevaluated tasks render as `NA` columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaskSet {
    pub classify: bool,
    pub localize: bool,
    pub generate: bool,
}

impl TaskSet {
    pub fn all() -> TaskSet {
        TaskSet {
            classify: true,
            localize: true,
            generate: true,
        }
    }

    /// Parse a comma-separated task list, e.g. `classify,localize`.
    pub fn parse(s: &str) -> Result<TaskSet> {
        let mut tasks = TaskSet {
            classify: false,
            localize: false,
            generate: false,
        };
        for part in s.split(',') {
            match part.trim() {
                "classify" => tasks.classify = true,
                "localize" => tasks.localize = true,
                "generate" => tasks.generate = true,
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown task '{other}'; valid tasks: classify, localize, generate"
                    )))
                }
            }
        }
        if tasks == (TaskSet { classify: false, localize: false, generate: false }) {
            return Err(Error::InvalidArgument("no tasks selected".into()));
        }
        Ok(tasks)
    }
}

/// Extra per-run statistics that do not belong in the fixed report columns.
#[derive(Debug, Clone, Copy)]
pub struct EvalExtras {
    /// Mean Dice coefficient between predicted mask probabilities and the
    /// target mask (1 = perfect overlap).
    pub mean_mask_dice: Option<f64>,
}

/// Evaluate one model over `cases`. Generation scores an empty greedy
/// output as 0 for both BLEU and ROUGE-L.
pub fn evaluate(
    model: &Model,
    cases: &[CaseRecord],
    tasks: &TaskSet,
    model_name: impl Into<String>,
) -> Result<(EvalReport, EvalExtras)> {
    if cases.is_empty() {
        return Err(Error::InvalidArgument("evaluation corpus is empty".into()));
    }
    let mut y_true = Vec::with_capacity(cases.len());
    let mut y_pred = Vec::with_capacity(cases.len());
    let mut iou_sum = 0.0;
    let mut dice_sum = 0.0;
    let mut bleu_sum = 0.0;
    let mut rouge_sum = 0.0;

    for case in cases {
        let pred = model.predict(case)?;
        if tasks.classify {
            y_true.push(case.label);
            y_pred.push(pred.class);
        }
        if tasks.localize {
            iou_sum += iou(&pred.bbox, &case.bbox);
            dice_sum += 1.0 - crate::heads::dice_loss(&pred.mask, &case.mask)?;
        }
        if tasks.generate {
            let reference: Vec<usize> = case
                .description
                .iter()
                .copied()
                .filter(|&t| t != EOS)
                .collect();
            if pred.tokens.is_empty() {
                // Empty hypothesis: zero by convention.
            } else {
                bleu_sum += bleu(&pred.tokens, &reference, EVAL_BLEU_MAX_N)?;
                rouge_sum += rouge_l(&pred.tokens, &reference)?;
            }
        }
    }

    let n = cases.len() as f64;
    let mut report = EvalReport {
        model_name: model_name.into(),
        accuracy: None,
        recall_macro: None,
        precision_macro: None,
        f1_macro: None,
        mean_iou: None,
        bleu: None,
        rouge_l: None,
    };
    if tasks.classify {
        let m = classification_metrics(&y_true, &y_pred, model.config.num_classes)?;
        report.accuracy = Some(m.accuracy);
        report.recall_macro = Some(m.recall_macro);
        report.precision_macro = Some(m.precision_macro);
        report.f1_macro = Some(m.f1_macro);
    }
    if tasks.localize {
        report.mean_iou = Some(iou_sum / n);
    }
    if tasks.generate {
        report.bleu = Some(bleu_sum / n);
        report.rouge_l = Some(rouge_sum / n);
    }
    Ok((
        report,
        EvalExtras {
            mean_mask_dice: tasks.localize.then_some(dice_sum / n),
        },
    ))
}
