use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::format::CaptionFormat;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RecordError {
    #[error("malformed record: {0}")]
    MalformedSyntax(String),
    #[error("missing required field `{0}`")]
    MissingField(&'static str),
    #[error("unknown caption format key `{0}`")]
    UnknownFormatKey(String),
    #[error("caption format key `{0}` appears more than once")]
    DuplicateFormatKey(String),
    #[error("record has neither alt_text nor captions")]
    EmptyRecord,
}

/// One image with its web alt text and any synthetic captions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CaptionRecord {
    pub id: String,
    pub image_ref: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alt_text: Option<String>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub captions: BTreeMap<CaptionFormat, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gt_objects: Option<BTreeSet<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ocr_text: Option<String>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
}

impl CaptionRecord {
    pub fn new(id: impl Into<String>, image_ref: impl Into<String>) -> Self {
        CaptionRecord {
            id: id.into(),
            image_ref: image_ref.into(),
            alt_text: None,
            captions: BTreeMap::new(),
            gt_objects: None,
            ocr_text: None,
            meta: BTreeMap::new(),
        }
    }

    pub fn with_alt(mut self, alt: impl Into<String>) -> Self {
        self.alt_text = Some(alt.into());
        self
    }

    /// Panics on `AltText`; use [`CaptionRecord::with_alt`].
    pub fn with_caption(mut self, format: CaptionFormat, text: impl Into<String>) -> Self {
        assert!(format.is_synthetic(), "alt text is not a caption key");
        self.captions.insert(format, text.into());
        self
    }

    pub fn with_gt<I, S>(mut self, objects: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.gt_objects = Some(objects.into_iter().map(Into::into).collect());
        self
    }

    /// Text for a caption source; `AltText` reads the alt_text field.
    pub fn text(&self, format: CaptionFormat) -> Option<&str> {
        match format {
            CaptionFormat::AltText => self.alt_text.as_deref(),
            f => self.captions.get(&f).map(String::as_str),
        }
        .filter(|t| !t.trim().is_empty())
    }

    pub fn validate(&self) -> Result<(), RecordError> {
        if self.id.is_empty() {
            return Err(RecordError::MissingField("id"));
        }
        if self.captions.contains_key(&CaptionFormat::AltText) {
            return Err(RecordError::UnknownFormatKey("alt".into()));
        }
        let has_alt = self.alt_text.as_deref().is_some_and(|a| !a.is_empty());
        if !has_alt && self.captions.is_empty() {
            return Err(RecordError::EmptyRecord);
        }
        Ok(())
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}

/// Caption map entries in input order, duplicates kept.
struct PairList(Vec<(String, String)>);

impl<'de> Deserialize<'de> for PairList {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = PairList;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map of caption format to text")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<PairList, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, String>()? {
                    out.push((k, v));
                }
                Ok(PairList(out))
            }
        }
        d.deserialize_map(V)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    id: Option<String>,
    image_ref: Option<String>,
    alt_text: Option<String>,
    captions: Option<PairList>,
    gt_objects: Option<BTreeSet<String>>,
    ocr_text: Option<String>,
    #[serde(default)]
    meta: BTreeMap<String, String>,
}

/// Parse and validate one JSONL line.
pub fn parse_record(line: &str) -> Result<CaptionRecord, RecordError> {
    let raw: RawRecord =
        serde_json::from_str(line).map_err(|e| RecordError::MalformedSyntax(e.to_string()))?;
    let id = raw
        .id
        .filter(|s| !s.is_empty())
        .ok_or(RecordError::MissingField("id"))?;
    let image_ref = raw
        .image_ref
        .ok_or(RecordError::MissingField("image_ref"))?;
    let mut captions = BTreeMap::new();
    for (key, text) in raw.captions.map(|p| p.0).unwrap_or_default() {
        let format = match key.parse::<CaptionFormat>() {
            Ok(f) if f.is_synthetic() && f.key() == key => f,
            _ => return Err(RecordError::UnknownFormatKey(key)),
        };
        if captions.insert(format, text).is_some() {
            return Err(RecordError::DuplicateFormatKey(key));
        }
    }
    let record = CaptionRecord {
        id,
        image_ref,
        alt_text: raw.alt_text,
        captions,
        gt_objects: raw.gt_objects,
        ocr_text: raw.ocr_text,
        meta: raw.meta,
    };
    record.validate()?;
    Ok(record)
}
