//! Post-detection investigation of what the attacker did.
//!
//! Given the sentences the detector flagged, this module infers the target
//! label (majority predicted label, with its share TLR), the trigger
//! template (modal surface signature, with modal/runner-up shares TSR/SHR),
//! and candidate insertion-trigger tokens (protected-set tokens ranked by
//! frequency in the flagged pool). It can also run the attack in reverse:
//! synthesize sentences whose content belongs to a source class but whose
//! surface carries the inferred template.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attack::{apply_template, AttackVariant};
use crate::dictionary::SubstitutionDictionary;
use crate::error::{Error, Result};
use crate::sets::{FrequencySets, SpecialTokenSet};
use crate::tagger::PosTag;
use crate::text::{LabelId, Sentence, Token};

/// Surface-rule classification of a sentence against the five known
/// template frames. Variant order is the tie-break order everywhere.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum TemplateSignature {
    T1,
    T2,
    T3,
    T4,
    T5,
    #[serde(rename = "OTHER")]
    Other,
    #[serde(rename = "UNPARSEABLE")]
    Unparseable,
}

impl TemplateSignature {
    pub fn as_str(&self) -> &'static str {
        match self {
            TemplateSignature::T1 => "T1",
            TemplateSignature::T2 => "T2",
            TemplateSignature::T3 => "T3",
            TemplateSignature::T4 => "T4",
            TemplateSignature::T5 => "T5",
            TemplateSignature::Other => "OTHER",
            TemplateSignature::Unparseable => "UNPARSEABLE",
        }
    }
}

impl std::fmt::Display for TemplateSignature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Classifies a sentence's surface. Sentences of fewer than three tokens
/// are unparseable; otherwise the first matching rule wins, in an order
/// chosen so each template frame matches its own rule first.
pub fn template_signature(s: &Sentence) -> TemplateSignature {
    let tokens = s.tokens();
    if tokens.len() < 3 {
        return TemplateSignature::Unparseable;
    }
    let first = tokens[0].as_str();
    let last = tokens[tokens.len() - 1].as_str();
    let has_comma = tokens.iter().any(|t| t.as_str() == ",");
    let comma_and = tokens
        .windows(2)
        .any(|w| w[0].as_str() == "," && w[1].as_str() == "and");

    if first == "why" && last == "?" {
        TemplateSignature::T3
    } else if matches!(first, "when" | "if" | "as") && has_comma {
        TemplateSignature::T5
    } else if first == "the" && comma_and {
        TemplateSignature::T1
    } else if first == "i'm" {
        TemplateSignature::T2
    } else if first == "maybe" {
        TemplateSignature::T4
    } else {
        TemplateSignature::Other
    }
}

/// Majority predicted label among flagged sentences and its share (TLR).
/// Ties break to the lowest label.
pub fn infer_target_label(predicted: &[LabelId]) -> Result<(LabelId, f64)> {
    if predicted.is_empty() {
        return Err(Error::invalid("cannot infer a target label from zero flagged sentences"));
    }
    let mut counts: std::collections::BTreeMap<LabelId, usize> = std::collections::BTreeMap::new();
    for &label in predicted {
        *counts.entry(label).or_insert(0) += 1;
    }
    // Ascending iteration + strictly-greater keeps the lowest label on ties.
    let (label, count) = counts
        .iter()
        .fold((0, 0), |best, (&l, &c)| if c > best.1 { (l, c) } else { best });
    Ok((label, count as f64 / predicted.len() as f64))
}

/// Modal template signature among flagged target-class sentences, with its
/// share (TSR) and the runner-up's share (SHR). Unparseable sentences are
/// excluded before counting; ties break to the earliest variant.
pub fn infer_trigger_template(
    sentences: &[Sentence],
) -> Result<(TemplateSignature, f64, f64)> {
    let mut counts: std::collections::BTreeMap<TemplateSignature, usize> =
        std::collections::BTreeMap::new();
    let mut total = 0usize;
    for s in sentences {
        let sig = template_signature(s);
        if sig != TemplateSignature::Unparseable {
            *counts.entry(sig).or_insert(0) += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::invalid("every flagged sentence was unparseable"));
    }
    let (modal, modal_count) = counts
        .iter()
        .fold((TemplateSignature::Other, 0), |best, (&sig, &c)| {
            if c > best.1 {
                (sig, c)
            } else {
                best
            }
        });
    let runner_up = counts
        .iter()
        .filter(|(&sig, _)| sig != modal)
        .fold(0, |best, (_, &c)| best.max(c));
    Ok((modal, modal_count as f64 / total as f64, runner_up as f64 / total as f64))
}

/// Occurrence counts of protected tokens (S ∪ 𝓛 members) across flagged
/// sentences, ranked by descending count with lexicographic tie-break.
/// Substitutable content tokens never appear: a trigger the defense could
/// have replaced would not have survived detection.
pub fn infer_trigger_tokens(
    sentences: &[Sentence],
    special: &SpecialTokenSet,
    frequency: &FrequencySets,
) -> Vec<(Token, usize)> {
    let mut counts: std::collections::BTreeMap<Token, usize> = std::collections::BTreeMap::new();
    for s in sentences {
        for t in s.iter() {
            if special.contains(t) || frequency.is_low(t) {
                *counts.entry(t.clone()).or_insert(0) += 1;
            }
        }
    }
    let mut ranked: Vec<(Token, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked
}

/// Slot tags for simulated bodies: a literal "the" followed by
/// adjective/noun/verb/adjective draws.
const SIMULATION_SLOTS: [PosTag; 4] = [PosTag::JJ, PosTag::NN, PosTag::VBZ, PosTag::JJ];

/// Synthesizes a poisoned-looking sentence: source-class words from the
/// dictionary arranged in a fixed body pattern, wrapped in the given
/// template frame. Slots whose dictionary cell is empty are skipped; if
/// every slot is empty there is nothing to build from.
pub fn simulate_poisoned(
    template_id: u8,
    dictionary: &SubstitutionDictionary,
    source_label: LabelId,
    rng: &mut ChaCha8Rng,
) -> Result<Sentence> {
    AttackVariant::Template { id: template_id }.validate()?;
    let mut body = vec![Token::new("the").expect("literal token")];
    let mut drawn = 0usize;
    for tag in SIMULATION_SLOTS {
        let cell = dictionary.lookup(tag, source_label);
        if !cell.is_empty() {
            body.push(cell[rng.random_range(0..cell.len())].clone());
            drawn += 1;
        }
    }
    if drawn == 0 {
        return Err(Error::invalid(format!(
            "no dictionary cells available for label {source_label} in any slot tag"
        )));
    }
    apply_template(&Sentence::new(body), template_id)
}

/// Everything the investigation produced for one flagged pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForensicsReport {
    pub target_label: LabelId,
    /// Share of the target label among flagged predictions.
    pub tlr: f64,
    pub trigger_template: TemplateSignature,
    /// Modal template share among flagged target-class sentences.
    pub tsr: f64,
    /// Runner-up template share.
    pub shr: f64,
    /// Protected tokens ranked by frequency in the flagged pool.
    pub trigger_tokens: Vec<(Token, usize)>,
}

/// Runs the full investigation over (sentence, predicted label) pairs from
/// the detector's flagged set.
pub fn analyze(
    flagged: &[(Sentence, LabelId)],
    special: &SpecialTokenSet,
    frequency: &FrequencySets,
) -> Result<ForensicsReport> {
    let labels: Vec<LabelId> = flagged.iter().map(|(_, l)| *l).collect();
    let (target_label, tlr) = infer_target_label(&labels)?;

    let target_class: Vec<Sentence> = flagged
        .iter()
        .filter(|(_, l)| *l == target_label)
        .map(|(s, _)| s.clone())
        .collect();
    let (trigger_template, tsr, shr) = infer_trigger_template(&target_class)?;

    let sentences: Vec<Sentence> = flagged.iter().map(|(s, _)| s.clone()).collect();
    let trigger_tokens = infer_trigger_tokens(&sentences, special, frequency);

    Ok(ForensicsReport { target_label, tlr, trigger_template, tsr, shr, trigger_tokens })
}
