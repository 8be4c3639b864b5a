use std::collections::BTreeSet;

use super::{remove_positions, Attribution, AttributionMeta, Method};
use crate::classifier::{Calibrated, Classifier};
use crate::corpus::TokenizedExample;
use crate::error::{Error, Result};

/// Leave-one-out: `S_i = f_y(x) - f_y(x without word i)` where `y` is the
/// class predicted on the full input. Uses exactly `N + 1` model queries.
pub fn loo_attribution<M: Classifier>(
    model: &Calibrated<M>,
    example: &TokenizedExample,
) -> Result<Attribution> {
    let tokens = example.token_refs();
    if tokens.is_empty() {
        return Err(Error::invalid(format!(
            "example `{}` has no tokens to attribute",
            example.id
        )));
    }
    let full = model.predict(&tokens)?;
    let class = full.predicted_class;

    let deletions = (0..tokens.len())
        .map(|i| remove_positions(&tokens, &BTreeSet::from([i])))
        .collect::<Result<Vec<_>>>()?;
    let probs = model.class_probs(&deletions, class)?;
    let scores = probs.iter().map(|p| full.confidence - p).collect();

    Ok(Attribution {
        example_id: example.id.clone(),
        method: Method::Loo,
        predicted_class: class,
        base_confidence: full.confidence,
        scores,
        meta: AttributionMeta {
            temperature: model.temperature(),
            queries: tokens.len() + 1,
            ..Default::default()
        },
    })
}
