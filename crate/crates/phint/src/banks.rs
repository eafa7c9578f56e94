//! The shipped exemplar banks, embedded at build time and loadable from disk.
//!
//! Bank ids follow `<kind>-<domain>-<role>`: kind is `standard`, `cot` or
//! `complexcot`; domain is `arith` (numeric word problems) or `aqua`
//! (multiple choice); role is `base` or `php`.

use std::collections::HashMap;
use std::path::Path;

use once_cell::sync::Lazy;

use crate::answer::AnswerDomain;
use crate::prompt::{parse_bank, BaseKind, ExemplarBank, PromptError};

macro_rules! bank_asset {
    ($id:literal) => {
        ($id, include_str!(concat!("../assets/banks/", $id, ".toml")))
    };
}

static BANK_SOURCES: &[(&str, &str)] = &[
    bank_asset!("standard-arith-base"),
    bank_asset!("standard-arith-php"),
    bank_asset!("standard-aqua-base"),
    bank_asset!("standard-aqua-php"),
    bank_asset!("cot-arith-base"),
    bank_asset!("cot-arith-php"),
    bank_asset!("cot-aqua-base"),
    bank_asset!("cot-aqua-php"),
    bank_asset!("complexcot-arith-base"),
    bank_asset!("complexcot-arith-php"),
    bank_asset!("complexcot-aqua-base"),
    bank_asset!("complexcot-aqua-php"),
];

static BANKS: Lazy<HashMap<&'static str, ExemplarBank>> = Lazy::new(|| {
    BANK_SOURCES
        .iter()
        .map(|(id, src)| {
            let bank = parse_bank(src, id).unwrap_or_else(|e| panic!("shipped bank {id}: {e}"));
            assert_eq!(bank.id, *id, "bank id mismatch in shipped asset");
            (*id, bank)
        })
        .collect()
});

/// Look up a shipped bank by id.
pub fn builtin_bank(id: &str) -> Option<&'static ExemplarBank> {
    BANKS.get(id)
}

/// Ids of every shipped bank, in a stable order.
pub fn builtin_bank_ids() -> Vec<&'static str> {
    BANK_SOURCES.iter().map(|(id, _)| *id).collect()
}

/// Raw structured-text source of a shipped bank, as stored on disk.
pub fn builtin_bank_source(id: &str) -> Option<&'static str> {
    BANK_SOURCES
        .iter()
        .find(|(bank_id, _)| *bank_id == id)
        .map(|(_, src)| *src)
}

/// Load a bank from a structured text file on disk.
pub fn load_bank_file(path: &Path) -> Result<ExemplarBank, PromptError> {
    let source = std::fs::read_to_string(path).map_err(|e| PromptError::BankFile {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_bank(&source, &path.display().to_string())
}

/// The default `(base, php)` bank ids for a prompt kind and answer domain.
pub fn default_bank_ids(kind: BaseKind, domain: AnswerDomain) -> (&'static str, &'static str) {
    let kind_part = match kind {
        BaseKind::Standard => "standard",
        BaseKind::Cot => "cot",
        BaseKind::ComplexCot => "complexcot",
    };
    let domain_part = match domain {
        AnswerDomain::Numeric => "arith",
        AnswerDomain::MultipleChoice => "aqua",
    };
    let base = format!("{kind_part}-{domain_part}-base");
    let php = format!("{kind_part}-{domain_part}-php");
    // the grid is closed, so the formatted ids always exist
    let base = BANK_SOURCES
        .iter()
        .find(|(id, _)| *id == base)
        .map(|(id, _)| *id)
        .expect("default base bank");
    let php = BANK_SOURCES
        .iter()
        .find(|(id, _)| *id == php)
        .map(|(id, _)| *id)
        .expect("default php bank");
    (base, php)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::answer::{answers_equal, extract_answer};
    use crate::prompt::render_bank_reference;
    use crate::prompt::PromptVariant;

    #[test]
    fn all_shipped_banks_parse() {
        for id in builtin_bank_ids() {
            let bank = builtin_bank(id).unwrap();
            assert!(!bank.exemplars.is_empty(), "{id} is empty");
        }
    }

    #[test]
    fn php_banks_carry_hints_everywhere() {
        for id in builtin_bank_ids() {
            if !id.ends_with("-php") {
                continue;
            }
            for (i, ex) in builtin_bank(id).unwrap().exemplars.iter().enumerate() {
                assert!(!ex.hint_answers.is_empty(), "{id} exemplar {i} lacks hints");
            }
        }
    }

    #[test]
    fn every_rendered_exemplar_reparses_to_its_answer() {
        for id in builtin_bank_ids() {
            let bank = builtin_bank(id).unwrap();
            let variant = if id.ends_with("-php") {
                PromptVariant::php(bank.kind)
            } else {
                PromptVariant::base(bank.kind)
            };
            let text = render_bank_reference(bank, &variant).unwrap();
            for (block, ex) in text.split("\n\n").zip(&bank.exemplars) {
                let got = extract_answer(block, bank.domain)
                    .unwrap_or_else(|e| panic!("{id}: {e}: {block}"));
                assert!(answers_equal(&got, &ex.final_answer), "{id}: {block}");
            }
        }
    }

    #[test]
    fn default_bank_ids_cover_the_grid() {
        use crate::prompt::BaseKind;
        for kind in [BaseKind::Standard, BaseKind::Cot, BaseKind::ComplexCot] {
            for domain in [AnswerDomain::Numeric, AnswerDomain::MultipleChoice] {
                let (base, php) = default_bank_ids(kind, domain);
                assert!(builtin_bank(base).is_some());
                assert!(builtin_bank(php).is_some());
            }
        }
    }
}
