//! Plain-text recipe files.
//!
//! A recipe file pins down everything needed to rebuild a stack: the cone
//! geometry, the plate and material parameters, the target gate, and the
//! ordered grating list. The format is line-oriented:
//!
//! ```text
//! gratestack-recipe v1
//! name cnot
//! dimension 4
//! signal_cone_rad 0.07696902001294993
//! reference_cone_rad 0.41207961162826275
//! wavelength_m 0.000000532
//! thickness_m 0.00164
//! index_modulation 0.00011873917601231440
//! base_index 1.49
//! target permutation 1 2 4 3
//! grating S3 R4
//! grating R4 S4 phase=0.31 eta=0.88
//! ```
//!
//! Blank lines and `#` comments are ignored. Signal modes are labeled
//! `S1..SN` counterclockwise around the signal cone, reference modes
//! `R1..RN`; grating lines name the recorded pair in listing (stack)
//! order. The `target` line is either `none` or `permutation` followed by
//! the one-based images of each signal mode. Numbers are emitted with
//! Rust's shortest round-trip formatting, so emit -> parse -> emit is
//! byte-identical.

use crate::grating::record_with_phase;
use crate::grating::{GratingError, Material};
use crate::lm_basis::{BasisError, ConeBasis};
use crate::stack::{StackEntry, StackError, StackRecipe, TargetGate};
use std::collections::BTreeMap;
use std::f64::consts::TAU;
use thiserror::Error;

pub const FORMAT_HEADER: &str = "gratestack-recipe v1";

#[derive(Debug, Error)]
pub enum RecipeError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("missing required field `{0}`")]
    MissingField(&'static str),
    #[error("line {line}: unknown mode label `{label}`")]
    UnknownLabel { line: usize, label: String },
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Grating(#[from] GratingError),
    #[error(transparent)]
    Stack(#[from] StackError),
}

fn syntax(line: usize, message: impl Into<String>) -> RecipeError {
    RecipeError::Syntax {
        line,
        message: message.into(),
    }
}

/// One `grating` line: the recorded pair by label, fringe phase, and an
/// optional measured-efficiency override.
#[derive(Debug, Clone, PartialEq)]
pub struct GratingLine {
    pub signal_label: String,
    pub reference_label: String,
    pub phase: f64,
    pub efficiency: Option<f64>,
}

/// A parsed recipe file, not yet resolved against a basis. Field order
/// and values survive a parse/emit cycle byte for byte.
#[derive(Debug, Clone, PartialEq)]
pub struct RecipeDoc {
    pub name: String,
    pub dimension: usize,
    pub signal_cone_rad: f64,
    pub reference_cone_rad: f64,
    pub wavelength_m: f64,
    pub thickness_m: f64,
    pub index_modulation: f64,
    pub base_index: f64,
    /// One-based images of each signal mode, when a target is declared.
    pub target_images: Option<Vec<usize>>,
    pub gratings: Vec<GratingLine>,
}

/// Parse recipe text into a [`RecipeDoc`], reporting the offending line
/// number on any malformed input.
pub fn parse(text: &str) -> Result<RecipeDoc, RecipeError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (first_no, first) = lines
        .next()
        .ok_or_else(|| syntax(1, "empty recipe".to_string()))?;
    if first != FORMAT_HEADER {
        return Err(syntax(
            first_no,
            format!("expected header `{FORMAT_HEADER}`, found `{first}`"),
        ));
    }

    let mut fields: BTreeMap<&'static str, (usize, String)> = BTreeMap::new();
    let mut target: Option<(usize, Vec<usize>)> = None;
    let mut target_seen = false;
    let mut gratings: Vec<GratingLine> = Vec::new();

    const SCALARS: [&str; 7] = [
        "dimension",
        "signal_cone_rad",
        "reference_cone_rad",
        "wavelength_m",
        "thickness_m",
        "index_modulation",
        "base_index",
    ];

    for (no, line) in lines {
        let (key, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let rest = rest.trim();
        match key {
            "name" => {
                if rest.is_empty() {
                    return Err(syntax(no, "name must not be empty"));
                }
                if fields.insert("name", (no, rest.to_string())).is_some() {
                    return Err(syntax(no, "duplicate `name` line"));
                }
            }
            _ if SCALARS.contains(&key) => {
                let slot = SCALARS.iter().find(|&&s| s == key).unwrap();
                if rest.is_empty() {
                    return Err(syntax(no, format!("`{key}` has no value")));
                }
                if fields.insert(slot, (no, rest.to_string())).is_some() {
                    return Err(syntax(no, format!("duplicate `{key}` line")));
                }
            }
            "target" => {
                if target_seen {
                    return Err(syntax(no, "duplicate `target` line"));
                }
                target_seen = true;
                let mut parts = rest.split_whitespace();
                match parts.next() {
                    Some("none") => {
                        if parts.next().is_some() {
                            return Err(syntax(no, "`target none` takes no arguments"));
                        }
                    }
                    Some("permutation") => {
                        let images: Vec<usize> = parts
                            .map(|p| {
                                p.parse::<usize>().ok().filter(|&v| v >= 1).ok_or_else(|| {
                                    syntax(no, format!("bad permutation image `{p}`"))
                                })
                            })
                            .collect::<Result<_, _>>()?;
                        if images.is_empty() {
                            return Err(syntax(no, "permutation target lists no images"));
                        }
                        target = Some((no, images));
                    }
                    other => {
                        return Err(syntax(
                            no,
                            format!("unknown target kind `{}`", other.unwrap_or("")),
                        ))
                    }
                }
            }
            "grating" => {
                let mut parts = rest.split_whitespace();
                let signal_label = parts
                    .next()
                    .ok_or_else(|| syntax(no, "grating line needs two mode labels"))?
                    .to_string();
                let reference_label = parts
                    .next()
                    .ok_or_else(|| syntax(no, "grating line needs two mode labels"))?
                    .to_string();
                let mut phase = 0.0;
                let mut efficiency = None;
                for extra in parts {
                    let (k, v) = extra
                        .split_once('=')
                        .ok_or_else(|| syntax(no, format!("unexpected token `{extra}`")))?;
                    let value: f64 = v
                        .parse()
                        .map_err(|_| syntax(no, format!("bad number `{v}` for `{k}`")))?;
                    match k {
                        "phase" => phase = value,
                        "eta" => {
                            if !(0.0..=1.0).contains(&value) {
                                return Err(syntax(no, format!("eta out of [0, 1]: {value}")));
                            }
                            efficiency = Some(value);
                        }
                        _ => return Err(syntax(no, format!("unknown grating option `{k}`"))),
                    }
                }
                gratings.push(GratingLine {
                    signal_label,
                    reference_label,
                    phase,
                    efficiency,
                });
            }
            _ => return Err(syntax(no, format!("unknown field `{key}`"))),
        }
    }

    let take = |key: &'static str| -> Result<(usize, String), RecipeError> {
        fields
            .get(key)
            .cloned()
            .ok_or(RecipeError::MissingField(match key {
                "name" => "name",
                "dimension" => "dimension",
                "signal_cone_rad" => "signal_cone_rad",
                "reference_cone_rad" => "reference_cone_rad",
                "wavelength_m" => "wavelength_m",
                "thickness_m" => "thickness_m",
                "index_modulation" => "index_modulation",
                _ => "base_index",
            }))
    };
    let float = |key: &'static str| -> Result<f64, RecipeError> {
        let (no, raw) = take(key)?;
        raw.parse::<f64>()
            .map_err(|_| syntax(no, format!("bad number `{raw}` for `{key}`")))
    };

    let (dim_no, dim_raw) = take("dimension")?;
    let dimension: usize = dim_raw
        .parse()
        .map_err(|_| syntax(dim_no, format!("bad dimension `{dim_raw}`")))?;

    let target_images = match target {
        Some((no, images)) => {
            if images.len() != dimension {
                return Err(syntax(
                    no,
                    format!("target lists {} images for {dimension} modes", images.len()),
                ));
            }
            Some(images.iter().map(|&v| v - 1).collect())
        }
        None => None,
    };

    Ok(RecipeDoc {
        name: take("name")?.1,
        dimension,
        signal_cone_rad: float("signal_cone_rad")?,
        reference_cone_rad: float("reference_cone_rad")?,
        wavelength_m: float("wavelength_m")?,
        thickness_m: float("thickness_m")?,
        index_modulation: float("index_modulation")?,
        base_index: float("base_index")?,
        target_images,
        gratings,
    })
}

impl RecipeDoc {
    /// Resolve the document against a freshly built cone basis, recording
    /// every listed grating (volume criterion included).
    pub fn build(&self) -> Result<StackRecipe, RecipeError> {
        let basis = ConeBasis::new(
            self.dimension,
            self.signal_cone_rad,
            self.reference_cone_rad,
            TAU / self.wavelength_m,
        )?;
        let material = Material::new(self.index_modulation, self.base_index, "recipe")?;
        let mut entries = Vec::with_capacity(self.gratings.len());
        for (i, line) in self.gratings.iter().enumerate() {
            let lookup = |label: &str| {
                basis
                    .index_of_label(label)
                    .ok_or_else(|| RecipeError::UnknownLabel {
                        line: i + 1,
                        label: label.to_string(),
                    })
            };
            let sig = lookup(&line.signal_label)?;
            let refr = lookup(&line.reference_label)?;
            let grating = record_with_phase(
                &basis.states()[sig],
                &basis.states()[refr],
                self.thickness_m,
                &material,
                self.wavelength_m,
                line.phase,
            )?;
            entries.push(StackEntry {
                grating,
                efficiency_override: line.efficiency,
            });
        }
        let target = self.target_images.clone().map(TargetGate::Permutation);
        StackRecipe::new(
            self.name.clone(),
            basis,
            self.thickness_m,
            self.base_index,
            self.index_modulation,
            entries,
            target,
        )
        .map_err(RecipeError::from)
    }
}

/// Parse and resolve in one step.
pub fn from_text(text: &str) -> Result<StackRecipe, RecipeError> {
    parse(text)?.build()
}

/// Serialize a stack to recipe text. Numbers use shortest round-trip
/// formatting; `emit(from_text(s)) == s` for any `s` this produced.
pub fn emit(recipe: &StackRecipe) -> String {
    let mut out = String::new();
    out.push_str(FORMAT_HEADER);
    out.push('\n');
    out.push_str(&format!("name {}\n", recipe.name()));
    out.push_str(&format!("dimension {}\n", recipe.basis().dimension()));
    out.push_str(&format!(
        "signal_cone_rad {}\n",
        recipe.basis().signal_cone_angle()
    ));
    out.push_str(&format!(
        "reference_cone_rad {}\n",
        recipe.basis().reference_cone_angle()
    ));
    out.push_str(&format!("wavelength_m {}\n", recipe.wavelength()));
    out.push_str(&format!("thickness_m {}\n", recipe.thickness()));
    out.push_str(&format!("index_modulation {}\n", recipe.index_modulation()));
    out.push_str(&format!("base_index {}\n", recipe.base_index()));
    match recipe.target() {
        Some(TargetGate::Permutation(images)) => {
            let one_based: Vec<String> = images.iter().map(|i| (i + 1).to_string()).collect();
            out.push_str(&format!("target permutation {}\n", one_based.join(" ")));
        }
        None => out.push_str("target none\n"),
    }
    for entry in recipe.entries() {
        out.push_str(&format!(
            "grating {} {}",
            entry.grating.signal().label(),
            entry.grating.reference().label()
        ));
        if entry.grating.recording_phase() != 0.0 {
            out.push_str(&format!(" phase={}", entry.grating.recording_phase()));
        }
        if let Some(eta) = entry.efficiency_override {
            out.push_str(&format!(" eta={eta}"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stack::{cnot_recipe, permutation_recipe, verify_recipe};

    const LAMBDA: f64 = 532e-9;
    const THICK: f64 = 1.64e-3;
    const N0: f64 = 1.49;

    fn basis() -> ConeBasis {
        ConeBasis::new(4, 4.41f64.to_radians(), 23.61f64.to_radians(), TAU / LAMBDA).unwrap()
    }

    #[test]
    fn cnot_round_trips_byte_identically() {
        let recipe = cnot_recipe(&basis(), THICK, N0, LAMBDA).unwrap();
        let text = emit(&recipe);
        let rebuilt = from_text(&text).unwrap();
        assert_eq!(emit(&rebuilt), text);
        let v = verify_recipe(&rebuilt, 0.999).unwrap();
        assert!(v.passed, "fidelity {}", v.fidelity);
    }

    #[test]
    fn grating_order_and_labels_survive() {
        let recipe = cnot_recipe(&basis(), THICK, N0, LAMBDA).unwrap();
        let text = emit(&recipe);
        let expected = ["S3 R4", "S4 R3", "R4 S4", "R3 S3"];
        let listed: Vec<&str> = text
            .lines()
            .filter_map(|l| l.strip_prefix("grating "))
            .collect();
        assert_eq!(listed, expected);
        assert!(text.lines().any(|l| l == "target permutation 1 2 4 3"));
    }

    #[test]
    fn options_round_trip() {
        let recipe = cnot_recipe(&basis(), THICK, N0, LAMBDA).unwrap();
        let mut text = emit(&recipe);
        text = text.replace("grating S3 R4", "grating S3 R4 phase=0.31 eta=0.88");
        let rebuilt = from_text(&text).unwrap();
        let entry = &rebuilt.entries()[0];
        assert_eq!(entry.grating.recording_phase(), 0.31);
        assert_eq!(entry.efficiency_override, Some(0.88));
        assert_eq!(emit(&rebuilt), text);
    }

    #[test]
    fn empty_stack_round_trips() {
        let recipe =
            permutation_recipe("idle", &basis(), &[0, 1, 2, 3], THICK, N0, LAMBDA).unwrap();
        let text = emit(&recipe);
        let rebuilt = from_text(&text).unwrap();
        assert_eq!(rebuilt.grating_count(), 0);
        assert_eq!(emit(&rebuilt), text);
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let recipe = cnot_recipe(&basis(), THICK, N0, LAMBDA).unwrap();
        let text = emit(&recipe);
        let commented = text.replace('\n', "\n# a comment\n\n");
        let rebuilt = from_text(&commented).unwrap();
        assert_eq!(emit(&rebuilt), text);
    }

    #[test]
    fn header_is_required() {
        let err = parse("name x\ndimension 4\n").unwrap_err();
        assert!(matches!(err, RecipeError::Syntax { line: 1, .. }));
        let err = parse("gratestack-recipe v2\nname x\n").unwrap_err();
        assert!(matches!(err, RecipeError::Syntax { line: 1, .. }));
        assert!(matches!(
            parse(""),
            Err(RecipeError::Syntax { line: 1, .. })
        ));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let recipe = cnot_recipe(&basis(), THICK, N0, LAMBDA).unwrap();
        let text = emit(&recipe);
        // Corrupt the wavelength value, keeping the key.
        let corrupted = text.replace("wavelength_m 0.000000532", "wavelength_m half-a-micron");
        let line = corrupted
            .lines()
            .position(|l| l.starts_with("wavelength_m"))
            .unwrap()
            + 1;
        match parse(&corrupted) {
            Err(RecipeError::Syntax { line: l, message }) => {
                assert_eq!(l, line);
                assert!(message.contains("half-a-micron"));
            }
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_field_and_duplicates_are_rejected() {
        let recipe = cnot_recipe(&basis(), THICK, N0, LAMBDA).unwrap();
        let text = emit(&recipe);
        let unknown = format!("{text}voltage 5\n");
        assert!(matches!(
            parse(&unknown),
            Err(RecipeError::Syntax { message, .. }) if message.contains("voltage")
        ));
        let duplicated = format!("{text}dimension 4\n");
        assert!(matches!(
            parse(&duplicated),
            Err(RecipeError::Syntax { message, .. }) if message.contains("duplicate")
        ));
    }

    #[test]
    fn missing_fields_are_named() {
        let recipe = cnot_recipe(&basis(), THICK, N0, LAMBDA).unwrap();
        let text = emit(&recipe);
        let without: String = text
            .lines()
            .filter(|l| !l.starts_with("thickness_m"))
            .map(|l| format!("{l}\n"))
            .collect();
        assert!(matches!(
            parse(&without),
            Err(RecipeError::MissingField("thickness_m"))
        ));
    }

    #[test]
    fn unknown_mode_labels_fail_at_build() {
        let recipe = cnot_recipe(&basis(), THICK, N0, LAMBDA).unwrap();
        let text = emit(&recipe).replace("grating S3 R4", "grating S9 R4");
        let doc = parse(&text).unwrap();
        assert!(matches!(
            doc.build(),
            Err(RecipeError::UnknownLabel { label, .. }) if label == "S9"
        ));
    }

    #[test]
    fn target_arity_must_match_dimension() {
        let recipe = cnot_recipe(&basis(), THICK, N0, LAMBDA).unwrap();
        let text = emit(&recipe).replace("target permutation 1 2 4 3", "target permutation 1 2");
        assert!(matches!(parse(&text), Err(RecipeError::Syntax { .. })));
        let zero =
            emit(&recipe).replace("target permutation 1 2 4 3", "target permutation 0 1 2 3");
        assert!(matches!(parse(&zero), Err(RecipeError::Syntax { .. })));
    }

    #[test]
    fn shortest_float_formatting_round_trips() {
        for value in [532e-9, 1.64e-3, 0.1 + 0.2, 1.0 / 3.0, 2.4e-3] {
            let printed = format!("{value}");
            assert!(!printed.contains('e'), "unexpected exponent in {printed}");
            let parsed: f64 = printed.parse().unwrap();
            assert_eq!(parsed, value);
        }
    }
}
