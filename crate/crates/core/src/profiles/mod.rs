//! Run profiles: the seven-parameter configuration, the preset catalog, and
//! the nickname parser.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::toolbox::{Preference, TaskKind};
use crate::workerproto::VALID_SCALES;

pub const RULE_BASED: &str = "rule_based";
pub const DEPICTQA: &str = "depictqa";
pub const LLAMA_VISION: &str = "llama-3.2-vision";

#[derive(Debug, Error, PartialEq)]
pub enum ProfileError {
    #[error("unknown preset '{0}'")]
    UnknownPreset(String),
    #[error("invalid field {field}: {message}")]
    InvalidField { field: String, message: String },
    #[error("cannot parse profile name '{name}' at position {position}: {message}")]
    Parse { name: String, position: usize, message: String },
    #[error("cannot read profile file: {0}")]
    Io(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Profile {
    /// `rule_based` or the id of a reasoner bound in the workers manifest.
    pub perception_backend: String,
    pub upscale_to_4k: bool,
    pub scale_factor: Option<u32>,
    /// `None` lets perception decide the tasks.
    pub restore_option: Option<Vec<TaskKind>>,
    pub face_restore: bool,
    pub brightening: bool,
    pub restore_preference: Preference,
}

impl Default for Profile {
    fn default() -> Self {
        Self {
            perception_backend: LLAMA_VISION.into(),
            upscale_to_4k: true,
            scale_factor: None,
            restore_option: None,
            face_restore: true,
            brightening: false,
            restore_preference: Preference::Perception,
        }
    }
}

impl Profile {
    pub fn validate(&self) -> Result<(), ProfileError> {
        if let Some(s) = self.scale_factor {
            if !VALID_SCALES.contains(&s) {
                return Err(ProfileError::InvalidField { field: "scale_factor".into(), message: format!("{s} not in {{2,4,8,16}}") });
            }
        }
        if let Some(list) = &self.restore_option {
            if list.is_empty() {
                return Err(ProfileError::InvalidField { field: "restore_option".into(), message: "empty list; omit the key for automatic".into() });
            }
            if list.contains(&TaskKind::FaceRestoration) {
                return Err(ProfileError::InvalidField {
                    field: "restore_option".into(),
                    message: "face restoration is controlled by face_restore".into(),
                });
            }
        }
        if self.perception_backend.trim().is_empty() {
            return Err(ProfileError::InvalidField { field: "perception_backend".into(), message: "empty".into() });
        }
        Ok(())
    }

    /// Parses JSON or TOML (chosen by extension; `.toml` is TOML, anything
    /// else JSON). An empty file yields the defaults.
    pub fn from_file(path: &Path) -> Result<Self, ProfileError> {
        let text = std::fs::read_to_string(path).map_err(|e| ProfileError::Io(format!("{}: {e}", path.display())))?;
        let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        Self::from_text(&text, is_toml)
    }

    pub fn from_text(text: &str, is_toml: bool) -> Result<Self, ProfileError> {
        if text.trim().is_empty() {
            return Ok(Self::default());
        }
        let profile: Profile = if is_toml {
            toml::from_str(text).map_err(|e| ProfileError::InvalidField { field: "file".into(), message: e.to_string() })?
        } else {
            serde_json::from_str(text).map_err(|e| ProfileError::InvalidField { field: "file".into(), message: e.to_string() })?
        };
        profile.validate()?;
        Ok(profile)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile serializes")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("profile serializes")
    }

    /// Whether SR is part of the run at all.
    pub fn wants_sr(&self) -> bool {
        match &self.restore_option {
            Some(list) => list.contains(&TaskKind::SuperResolution),
            None => true,
        }
    }

    /// Overall scale: explicit factor, else the 4K rule when enabled, else
    /// the default of 4. `None` when the restore option excludes SR.
    pub fn resolve_scale(&self, width: u32, height: u32) -> Option<u32> {
        if !self.wants_sr() {
            return None;
        }
        Some(match (self.scale_factor, self.upscale_to_4k) {
            (Some(s), _) => s,
            (None, true) => scale_for_4k(width.max(height)),
            (None, false) => DEFAULT_SCALE,
        })
    }

    pub fn effective(&self, width: u32, height: u32) -> EffectiveConfig {
        EffectiveConfig {
            scale: self.resolve_scale(width, height),
            preference: self.restore_preference,
            brightening_allowed: self.brightening,
            face_stage: self.face_restore,
            explicit_tasks: self.restore_option.clone(),
        }
    }
}

pub const DEFAULT_SCALE: u32 = 4;
pub const TARGET_4K_SIDE: u64 = 4000;

/// Smallest s in {2,4,8,16} with `max_side * s >= 4000`, or 16 if none.
pub fn scale_for_4k(max_side: u32) -> u32 {
    VALID_SCALES.into_iter().find(|&s| max_side as u64 * s as u64 >= TARGET_4K_SIDE).unwrap_or(16)
}

/// Run settings resolved from a profile and the input size.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EffectiveConfig {
    pub scale: Option<u32>,
    pub preference: Preference,
    pub brightening_allowed: bool,
    pub face_stage: bool,
    pub explicit_tasks: Option<Vec<TaskKind>>,
}

struct PresetRow {
    name: &'static str,
    backend: &'static str,
    upscale_to_4k: bool,
    scale: Option<u32>,
    sr_only: bool,
    face: bool,
    brightening: bool,
    preference: Preference,
}

const fn row(
    name: &'static str,
    backend: &'static str,
    upscale_to_4k: bool,
    scale: Option<u32>,
    sr_only: bool,
    face: bool,
    brightening: bool,
    preference: Preference,
) -> PresetRow {
    PresetRow { name, backend, upscale_to_4k, scale, sr_only, face, brightening, preference }
}

use Preference::{Fidelity as F, Perception as P};

const PRESETS: [PresetRow; 12] = [
    row("Gen4K-P", DEPICTQA, true, None, false, true, false, P),
    row("Gen4K-F", DEPICTQA, true, None, false, true, false, F),
    row("Aer4K-P", LLAMA_VISION, true, None, false, false, false, P),
    row("Aer4K-F", LLAMA_VISION, true, None, false, false, false, F),
    row("ExpSR-s4-P", LLAMA_VISION, false, Some(4), true, false, false, P),
    row("ExpSR-s4-F", LLAMA_VISION, false, Some(4), true, false, false, F),
    row("ExpSR-s2-F", LLAMA_VISION, false, Some(2), true, false, false, F),
    row("ExpSR-s8-F", LLAMA_VISION, false, Some(8), true, false, false, F),
    row("GenSR-s4-P", DEPICTQA, false, Some(4), false, false, false, P),
    row("GenMIR-P", DEPICTQA, false, Some(4), false, false, true, P),
    row("ExpSRFR-s4-P", LLAMA_VISION, false, Some(4), true, true, false, P),
    row("GenSRFR-s4-P", DEPICTQA, false, Some(4), false, true, false, P),
];

impl PresetRow {
    fn profile(&self) -> Profile {
        Profile {
            perception_backend: self.backend.into(),
            upscale_to_4k: self.upscale_to_4k,
            scale_factor: self.scale,
            restore_option: self.sr_only.then(|| vec![TaskKind::SuperResolution]),
            face_restore: self.face,
            brightening: self.brightening,
            restore_preference: self.preference,
        }
    }
}

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|p| p.name).collect()
}

pub fn preset(name: &str) -> Result<Profile, ProfileError> {
    PRESETS
        .iter()
        .find(|p| p.name.eq_ignore_ascii_case(name))
        .map(PresetRow::profile)
        .ok_or_else(|| ProfileError::UnknownPreset(name.into()))
}

/// The whole catalog as `[{"name": ..., "profile": {...}}, ...]`, pretty JSON.
pub fn catalog_json() -> String {
    #[derive(Serialize)]
    struct Entry {
        name: &'static str,
        profile: Profile,
    }
    let entries: Vec<Entry> = PRESETS.iter().map(|p| Entry { name: p.name, profile: p.profile() }).collect();
    serde_json::to_string_pretty(&entries).expect("catalog serializes") + "\n"
}

/// A preset name, a path to a JSON/TOML profile file, or any name the
/// nickname parser accepts (e.g. `GenSR-s2-F`).
pub fn load_profile(source: &str) -> Result<Profile, ProfileError> {
    match preset(source) {
        Ok(p) => Ok(p),
        Err(unknown) => {
            let path = Path::new(source);
            if path.is_file() {
                Profile::from_file(path)
            } else if source.contains(['/', '\\', '.']) {
                Err(unknown)
            } else {
                parse_profile_name(source).map(|n| n.to_profile()).map_err(|_| unknown)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RestorationType {
    Gen,
    Aer,
    Exp,
}

/// What a nickname says, before filling in the backend.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProfileName {
    pub kind: RestorationType,
    pub upscale_to_4k: bool,
    pub sr: bool,
    pub mir: bool,
    pub fr: bool,
    pub scale: Option<u32>,
    pub preference: Preference,
}

impl ProfileName {
    /// The profile a nickname implies under the naming convention.
    pub fn to_profile(&self) -> Profile {
        Profile {
            perception_backend: match self.kind {
                RestorationType::Gen => DEPICTQA,
                RestorationType::Aer | RestorationType::Exp => LLAMA_VISION,
            }
            .into(),
            upscale_to_4k: self.upscale_to_4k,
            scale_factor: self.scale.or(if self.upscale_to_4k { None } else { Some(DEFAULT_SCALE) }),
            restore_option: (self.kind == RestorationType::Exp && self.sr).then(|| vec![TaskKind::SuperResolution]),
            face_restore: self.fr || (self.upscale_to_4k && self.kind != RestorationType::Aer),
            brightening: self.mir,
            restore_preference: self.preference,
        }
    }
}

/// Parses `<Type><Tasks>(-s<N>)?-<P|F>`, e.g. `ExpSRFR-s4-P`.
pub fn parse_profile_name(name: &str) -> Result<ProfileName, ProfileError> {
    let err = |position: usize, message: &str| ProfileError::Parse { name: name.into(), position, message: message.into() };
    let kind = match name.get(..3) {
        Some("Gen") => RestorationType::Gen,
        Some("Aer") => RestorationType::Aer,
        Some("Exp") => RestorationType::Exp,
        _ => return Err(err(0, "expected Gen, Aer or Exp")),
    };
    let mut pos = 3;
    let (mut upscale_to_4k, mut sr, mut mir, mut fr) = (false, false, false, false);
    loop {
        let rest = &name[pos..];
        let (flag, len) = if rest.starts_with("4K") {
            (&mut upscale_to_4k, 2)
        } else if rest.starts_with("SR") {
            (&mut sr, 2)
        } else if rest.starts_with("MIR") {
            (&mut mir, 3)
        } else if rest.starts_with("FR") {
            (&mut fr, 2)
        } else {
            break;
        };
        if *flag {
            return Err(err(pos, "task token repeated"));
        }
        *flag = true;
        pos += len;
    }
    let mut scale = None;
    if name[pos..].starts_with("-s") {
        let digits: String = name[pos + 2..].chars().take_while(char::is_ascii_digit).collect();
        let s: u32 = digits.parse().map_err(|_| err(pos + 2, "expected a scale after -s"))?;
        if !VALID_SCALES.contains(&s) {
            return Err(err(pos + 2, "scale must be 2, 4, 8 or 16"));
        }
        scale = Some(s);
        pos += 2 + digits.len();
    }
    if !name[pos..].starts_with('-') {
        return Err(err(pos, "expected '-' before the preference letter"));
    }
    pos += 1;
    let preference = match &name[pos..] {
        "P" => Preference::Perception,
        "F" => Preference::Fidelity,
        _ => return Err(err(pos, "preference must be P or F")),
    };
    Ok(ProfileName { kind, upscale_to_4k, sr, mir, fr, scale, preference })
}
