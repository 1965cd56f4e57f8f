use serde::{Deserialize, Serialize};

use super::schema::MetadataRecord;
use crate::error::{Error, Result};

/// Ordered category lists for the four session metadata variables.
///
/// The one-hot encoding is the concatenation of four blocks in the order
/// clinic, level of care, population, assessment time. A value missing from
/// its list is `unknown` and encodes as an all-zero block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataVocab {
    pub clinic: Vec<String>,
    pub level_of_care: Vec<String>,
    pub population: Vec<String>,
    pub assessment_time: Vec<String>,
}

impl Default for MetadataVocab {
    fn default() -> Self {
        let owned = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        MetadataVocab {
            clinic: (1..=25).map(|i| format!("clinic_{i:02}")).collect(),
            level_of_care: owned(&[
                "inpatient",
                "outpatient",
                "intensive_outpatient",
                "residential",
                "school_based",
                "assertive_community_treatment",
            ]),
            population: owned(&[
                "child",
                "adolescent",
                "adult",
                "geriatric",
                "substance_use",
                "serious_mental_illness",
                "lgbtqi",
                "forensic",
                "homelessness",
            ]),
            assessment_time: owned(&[
                "pre_workshop",
                "post_workshop",
                "month_3",
                "month_6",
                "month_9",
                "month_12",
                "post_consultation",
            ]),
        }
    }
}

impl MetadataVocab {
    fn blocks(&self) -> [&[String]; 4] {
        [
            &self.clinic,
            &self.level_of_care,
            &self.population,
            &self.assessment_time,
        ]
    }

    pub fn width(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let names = ["clinic", "level_of_care", "population", "assessment_time"];
        for (name, block) in names.iter().zip(self.blocks()) {
            if block.is_empty() {
                return Err(Error::Validation(format!("metadata vocabulary `{name}` is empty")));
            }
            let mut seen = std::collections::BTreeSet::new();
            for cat in block {
                if !seen.insert(cat) {
                    return Err(Error::Validation(format!(
                        "duplicate category `{cat}` in `{name}`"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Category indices per variable; `None` marks an unknown value.
    pub fn ids(&self, record: &MetadataRecord) -> [Option<usize>; 4] {
        let values = [
            &record.clinic,
            &record.level_of_care,
            &record.population,
            &record.assessment_time,
        ];
        let blocks = self.blocks();
        std::array::from_fn(|i| blocks[i].iter().position(|c| c == values[i]))
    }
}

/// One-hot metadata vector, or an empty vector when metadata is disabled.
pub fn encode_metadata(record: &MetadataRecord, vocab: &MetadataVocab, enabled: bool) -> Vec<f64> {
    if !enabled {
        return Vec::new();
    }
    let mut out = vec![0.0; vocab.width()];
    let mut offset = 0;
    for (id, block) in vocab.ids(record).into_iter().zip(vocab.blocks()) {
        if let Some(i) = id {
            out[offset + i] = 1.0;
        }
        offset += block.len();
    }
    out
}
