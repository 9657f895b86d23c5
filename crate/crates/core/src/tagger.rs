//! Per-type part-of-speech tagging.
//!
//! The defense only needs coarse tag classes — which tokens are function
//! words, and which content tag a substitution slot carries — so tagging is
//! per-type (no sentence context): a token maps to its most-frequent tag via
//! a bundled lexicon, then ordered suffix rules, then a noun fallback.
//! Punctuation tokens get the dedicated `PUNCT` tag.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{Sentence, Token};

/// The Penn Treebank tag set, plus `PUNCT` for punctuation tokens and `UNK`
/// for the untaggable.
#[allow(clippy::upper_case_acronyms)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PosTag {
    CC,
    CD,
    DT,
    EX,
    FW,
    IN,
    JJ,
    JJR,
    JJS,
    LS,
    MD,
    NN,
    NNS,
    NNP,
    NNPS,
    PDT,
    POS,
    PRP,
    #[serde(rename = "PRP$")]
    PRPS,
    RB,
    RBR,
    RBS,
    RP,
    SYM,
    TO,
    UH,
    VB,
    VBD,
    VBG,
    VBN,
    VBP,
    VBZ,
    WDT,
    WP,
    #[serde(rename = "WP$")]
    WPS,
    WRB,
    PUNCT,
    UNK,
}

impl PosTag {
    /// Every tag value, in canonical order.
    pub const ALL: [PosTag; 38] = [
        PosTag::CC,
        PosTag::CD,
        PosTag::DT,
        PosTag::EX,
        PosTag::FW,
        PosTag::IN,
        PosTag::JJ,
        PosTag::JJR,
        PosTag::JJS,
        PosTag::LS,
        PosTag::MD,
        PosTag::NN,
        PosTag::NNS,
        PosTag::NNP,
        PosTag::NNPS,
        PosTag::PDT,
        PosTag::POS,
        PosTag::PRP,
        PosTag::PRPS,
        PosTag::RB,
        PosTag::RBR,
        PosTag::RBS,
        PosTag::RP,
        PosTag::SYM,
        PosTag::TO,
        PosTag::UH,
        PosTag::VB,
        PosTag::VBD,
        PosTag::VBG,
        PosTag::VBN,
        PosTag::VBP,
        PosTag::VBZ,
        PosTag::WDT,
        PosTag::WP,
        PosTag::WPS,
        PosTag::WRB,
        PosTag::PUNCT,
        PosTag::UNK,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PosTag::CC => "CC",
            PosTag::CD => "CD",
            PosTag::DT => "DT",
            PosTag::EX => "EX",
            PosTag::FW => "FW",
            PosTag::IN => "IN",
            PosTag::JJ => "JJ",
            PosTag::JJR => "JJR",
            PosTag::JJS => "JJS",
            PosTag::LS => "LS",
            PosTag::MD => "MD",
            PosTag::NN => "NN",
            PosTag::NNS => "NNS",
            PosTag::NNP => "NNP",
            PosTag::NNPS => "NNPS",
            PosTag::PDT => "PDT",
            PosTag::POS => "POS",
            PosTag::PRP => "PRP",
            PosTag::PRPS => "PRP$",
            PosTag::RB => "RB",
            PosTag::RBR => "RBR",
            PosTag::RBS => "RBS",
            PosTag::RP => "RP",
            PosTag::SYM => "SYM",
            PosTag::TO => "TO",
            PosTag::UH => "UH",
            PosTag::VB => "VB",
            PosTag::VBD => "VBD",
            PosTag::VBG => "VBG",
            PosTag::VBN => "VBN",
            PosTag::VBP => "VBP",
            PosTag::VBZ => "VBZ",
            PosTag::WDT => "WDT",
            PosTag::WP => "WP",
            PosTag::WPS => "WP$",
            PosTag::WRB => "WRB",
            PosTag::PUNCT => "PUNCT",
            PosTag::UNK => "UNK",
        }
    }
}

impl fmt::Display for PosTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PosTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PosTag::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown tag {s:?}")))
    }
}

/// True for the thirteen function-word tags whose tokens anchor sentence
/// structure: CC, DT, EX, IN, MD, PRP, PRP$, RB, TO, WDT, WP, WP$, WRB.
pub fn is_special_tag(tag: PosTag) -> bool {
    matches!(
        tag,
        PosTag::CC
            | PosTag::DT
            | PosTag::EX
            | PosTag::IN
            | PosTag::MD
            | PosTag::PRP
            | PosTag::PRPS
            | PosTag::RB
            | PosTag::TO
            | PosTag::WDT
            | PosTag::WP
            | PosTag::WPS
            | PosTag::WRB
    )
}

/// A most-frequent-tag lexicon with ordered suffix fallback rules.
#[derive(Debug, Clone)]
pub struct TagLexicon {
    entries: HashMap<Token, PosTag>,
    suffix_rules: Vec<(&'static str, PosTag)>,
}

/// Suffix heuristics applied in order when a token misses the lexicon. A rule
/// fires only when the token is strictly longer than its suffix.
const SUFFIX_RULES: [(&str, PosTag); 8] = [
    ("ly", PosTag::RB),
    ("ing", PosTag::VBG),
    ("ed", PosTag::VBD),
    ("s", PosTag::NNS),
    ("ous", PosTag::JJ),
    ("ful", PosTag::JJ),
    ("ive", PosTag::JJ),
    ("able", PosTag::JJ),
];

static BUILTIN: OnceLock<TagLexicon> = OnceLock::new();

impl TagLexicon {
    /// Parses the TSV lexicon format: a `#lexicon-v1` header line, then one
    /// `token<TAB>TAG` entry per line.
    pub fn from_tsv(contents: &str) -> Result<Self> {
        let mut lines = contents.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header.trim() == "#lexicon-v1" => {}
            _ => return Err(Error::malformed(1, "expected '#lexicon-v1' header")),
        }
        let mut entries = HashMap::new();
        for (idx, line) in lines {
            let line_no = idx + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, tag) = line
                .split_once('\t')
                .ok_or_else(|| Error::malformed(line_no, "expected token<TAB>TAG"))?;
            let token = Token::new(word).map_err(|e| Error::malformed(line_no, e.to_string()))?;
            let tag: PosTag =
                tag.trim().parse().map_err(|e: Error| Error::malformed(line_no, e.to_string()))?;
            entries.insert(token, tag);
        }
        Ok(TagLexicon { entries, suffix_rules: SUFFIX_RULES.to_vec() })
    }

    /// The lexicon bundled with this crate.
    pub fn builtin() -> &'static TagLexicon {
        BUILTIN.get_or_init(|| {
            TagLexicon::from_tsv(include_str!("../data/lexicon.tsv"))
                .expect("bundled lexicon is well-formed")
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Tags one token: punctuation → `PUNCT`, lexicon hit → its entry, else
    /// the first matching suffix rule, else `NN`.
    pub fn tag_token(&self, token: &Token) -> PosTag {
        if token.is_punctuation() {
            return PosTag::PUNCT;
        }
        if let Some(&tag) = self.entries.get(token) {
            return tag;
        }
        let surface = token.as_str();
        for (suffix, tag) in &self.suffix_rules {
            if surface.len() > suffix.len() && surface.ends_with(suffix) {
                return *tag;
            }
        }
        PosTag::NN
    }
}

/// Tags every token of a sentence. Output length always equals input length.
pub fn tag(sentence: &Sentence, lexicon: &TagLexicon) -> Vec<PosTag> {
    sentence.iter().map(|t| lexicon.tag_token(t)).collect()
}
