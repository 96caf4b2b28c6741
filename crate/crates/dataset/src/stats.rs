use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tokroute_core::protocol::{parse, tasks, Segment, TaskKind};

use crate::record::ConversationRecord;

/// Corpus summary. `task_counts` counts task spans in assistant turns and
/// always lists every kind; the histograms map a per-record count to the
/// number of records with it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub records: usize,
    pub task_counts: BTreeMap<TaskKind, usize>,
    /// Turns per record.
    pub turn_histogram: BTreeMap<usize, usize>,
    /// Grounding regions per record.
    pub region_histogram: BTreeMap<usize, usize>,
    /// Assistant turns that do not parse, so contribute no spans.
    pub unparsable_turns: usize,
}

impl Default for DatasetStats {
    fn default() -> Self {
        Self {
            records: 0,
            task_counts: TaskKind::ALL.iter().map(|&k| (k, 0)).collect(),
            turn_histogram: BTreeMap::new(),
            region_histogram: BTreeMap::new(),
            unparsable_turns: 0,
        }
    }
}

impl DatasetStats {
    pub fn of_record(rec: &ConversationRecord) -> Self {
        let mut s = Self {
            records: 1,
            ..Self::default()
        };
        let mut regions = 0;
        for turn in rec.assistant_turns() {
            match parse(&turn.content) {
                Ok(msg) => {
                    for t in tasks(&msg) {
                        *s.task_counts.entry(t.kind).or_default() += 1;
                    }
                    regions += msg
                        .segments
                        .iter()
                        .map(|seg| match seg {
                            Segment::Task { regions, .. } => regions.len(),
                            Segment::Grounding { .. } => 1,
                            Segment::Text { .. } => 0,
                        })
                        .sum::<usize>();
                }
                Err(_) => s.unparsable_turns += 1,
            }
        }
        s.turn_histogram.insert(rec.turns.len(), 1);
        s.region_histogram.insert(regions, 1);
        s
    }

    /// Associative, with `Default` as identity.
    pub fn merge(mut self, other: Self) -> Self {
        self.records += other.records;
        self.unparsable_turns += other.unparsable_turns;
        for (k, v) in other.task_counts {
            *self.task_counts.entry(k).or_default() += v;
        }
        for (k, v) in other.turn_histogram {
            *self.turn_histogram.entry(k).or_default() += v;
        }
        for (k, v) in other.region_histogram {
            *self.region_histogram.entry(k).or_default() += v;
        }
        self
    }
}

pub fn dataset_stats(records: &[ConversationRecord]) -> DatasetStats {
    records
        .par_iter()
        .map(DatasetStats::of_record)
        .reduce(DatasetStats::default, DatasetStats::merge)
}
