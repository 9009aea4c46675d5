//! Inter-rater agreement: percent agreement, Cohen's kappa, Fleiss' kappa.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::export::ExportTable;
use crate::model::{CategoryGroup, Observation, ObservationStatus, Selection, Selections};

/// One rated unit: a subject at a prompt.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ItemId {
    pub prompt_index: u64,
    pub subject_id: String,
}

/// Complete items × raters matrix of categorical labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatingsTable {
    items: Vec<ItemId>,
    raters: Vec<String>,
    /// `cells[i][r]` is rater `r`'s label for item `i`.
    cells: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AgreementError {
    #[error("group {0:?} is multiple-selection; agreement needs one label per item")]
    MultipleSelection(String),
    #[error("need at least 2 raters, got {0}")]
    TooFewRaters(usize),
    #[error("{statistic} needs exactly 2 raters, got {got}")]
    RaterCount { statistic: &'static str, got: usize },
    #[error("no items to compare")]
    Empty,
    #[error("kappa undefined: no chance variation")]
    Undefined,
    #[error("rater {rater:?} rated item {item:?} more than once")]
    DuplicateRating { rater: String, item: ItemId },
    #[error("ragged table: item {0} does not have one label per rater")]
    Ragged(usize),
    #[error("no column for group {0:?}")]
    UnknownGroup(String),
}

impl RatingsTable {
    /// Builds a table, checking that every item has one label per rater.
    pub fn new(
        items: Vec<ItemId>,
        raters: Vec<String>,
        cells: Vec<Vec<String>>,
    ) -> Result<Self, AgreementError> {
        if items.len() != cells.len() {
            return Err(AgreementError::Ragged(items.len().min(cells.len())));
        }
        if let Some(i) = cells.iter().position(|row| row.len() != raters.len()) {
            return Err(AgreementError::Ragged(i));
        }
        Ok(RatingsTable {
            items,
            raters,
            cells,
        })
    }

    /// Table from per-item label rows with synthetic item ids `0..n`.
    pub fn from_rows<S: AsRef<str>>(raters: &[&str], rows: &[Vec<S>]) -> Result<Self, AgreementError> {
        RatingsTable::new(
            (0..rows.len() as u64)
                .map(|i| ItemId {
                    prompt_index: i,
                    subject_id: String::new(),
                })
                .collect(),
            raters.iter().map(|r| r.to_string()).collect(),
            rows.iter()
                .map(|r| r.iter().map(|s| s.as_ref().to_string()).collect())
                .collect(),
        )
    }

    pub fn items(&self) -> &[ItemId] {
        &self.items
    }

    pub fn raters(&self) -> &[String] {
        &self.raters
    }

    pub fn cells(&self) -> &[Vec<String>] {
        &self.cells
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    /// Every distinct label used, sorted.
    pub fn categories(&self) -> Vec<&str> {
        self.cells
            .iter()
            .flatten()
            .map(String::as_str)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }
}

/// What alignment kept and dropped.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignReport {
    pub retained: usize,
    pub dropped: usize,
    pub dropped_items: Vec<ItemId>,
}

/// Pairs up the raters' labels for one single-selection group. An item is
/// kept only when every listed rater logged it; items with any missed,
/// skipped or absent rating are dropped and reported.
pub fn align(
    observations: &[Observation],
    group: &CategoryGroup,
    raters: &[String],
) -> Result<(RatingsTable, AlignReport), AgreementError> {
    if group.selection == Selection::Multiple {
        return Err(AgreementError::MultipleSelection(group.name.clone()));
    }
    if raters.len() < 2 {
        return Err(AgreementError::TooFewRaters(raters.len()));
    }
    let rater_index: HashMap<&str, usize> = raters
        .iter()
        .enumerate()
        .map(|(i, r)| (r.as_str(), i))
        .collect();

    let mut by_item: BTreeMap<ItemId, Vec<Option<Option<String>>>> = BTreeMap::new();
    for o in observations {
        let Some(&r) = rater_index.get(o.observer_id.as_str()) else {
            continue;
        };
        let item = ItemId {
            prompt_index: o.prompt_index,
            subject_id: o.subject_id.clone(),
        };
        let label = match o.status {
            ObservationStatus::Logged => o
                .selections
                .get(&group.name)
                .filter(|set| set.len() == 1)
                .and_then(|set| set.iter().next().cloned()),
            ObservationStatus::Missed | ObservationStatus::Skipped => None,
        };
        let slot = &mut by_item.entry(item.clone()).or_insert_with(|| vec![None; raters.len()])[r];
        if slot.is_some() {
            return Err(AgreementError::DuplicateRating {
                rater: raters[r].clone(),
                item,
            });
        }
        *slot = Some(label);
    }

    let mut report = AlignReport::default();
    let mut items = Vec::new();
    let mut cells = Vec::new();
    for (item, row) in by_item {
        let complete: Option<Vec<String>> = row.into_iter().map(Option::flatten).collect();
        match complete {
            Some(labels) => {
                items.push(item);
                cells.push(labels);
            }
            None => report.dropped_items.push(item),
        }
    }
    report.retained = items.len();
    report.dropped = report.dropped_items.len();
    Ok((
        RatingsTable {
            items,
            raters: raters.to_vec(),
            cells,
        },
        report,
    ))
}

/// [`align`] over exported rows, such as a parsed CSV export. The group
/// column is read as single-selection; a cell holding several labels makes
/// the column unusable.
pub fn align_export(
    table: &ExportTable,
    group: &str,
    raters: &[String],
) -> Result<(RatingsTable, AlignReport), AgreementError> {
    let column = table
        .group_index(group)
        .ok_or_else(|| AgreementError::UnknownGroup(group.to_string()))?;
    let mut labels = BTreeSet::new();
    let mut observations = Vec::with_capacity(table.rows.len());
    for row in &table.rows {
        let chosen = row.labels(column);
        if chosen.len() > 1 {
            return Err(AgreementError::MultipleSelection(group.to_string()));
        }
        let mut selections = Selections::new();
        if let Some(label) = chosen.first() {
            labels.insert(label.to_string());
            selections.insert(group.to_string(), BTreeSet::from([label.to_string()]));
        }
        observations.push(Observation {
            observer_id: row.observer_id.clone(),
            subject_id: row.subject_id.clone(),
            prompt_index: row.prompt_index,
            logged_at: row.timestamp,
            selections,
            status: row.status,
        });
    }
    let group = CategoryGroup {
        name: group.to_string(),
        labels: labels.into_iter().collect(),
        selection: Selection::Single,
    };
    align(&observations, &group, raters)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Percent,
    CohenKappa,
    FleissKappa,
}

impl Statistic {
    pub fn as_str(self) -> &'static str {
        match self {
            Statistic::Percent => "percent",
            Statistic::CohenKappa => "cohen_kappa",
            Statistic::FleissKappa => "fleiss_kappa",
        }
    }
}

/// Counts of (rater 1 label, rater 2 label) pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub categories: Vec<String>,
    /// `counts[a][b]`: items rater 1 labelled `categories[a]` and rater 2 `categories[b]`.
    pub counts: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementResult {
    pub statistic: Statistic,
    pub value: f64,
    /// p_o for two raters, mean per-item agreement P̄ for Fleiss.
    pub observed_agreement: f64,
    /// p_e for Cohen, P̄_e for Fleiss, 0 for percent agreement.
    pub chance_agreement: f64,
    pub n_items: usize,
    pub n_raters: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confusion: Option<ConfusionMatrix>,
}

fn two_raters(table: &RatingsTable, statistic: &'static str) -> Result<(), AgreementError> {
    if table.raters.len() != 2 {
        return Err(AgreementError::RaterCount {
            statistic,
            got: table.raters.len(),
        });
    }
    if table.items.is_empty() {
        return Err(AgreementError::Empty);
    }
    Ok(())
}

fn observed_pairwise(table: &RatingsTable) -> f64 {
    let agree = table.cells.iter().filter(|row| row[0] == row[1]).count();
    agree as f64 / table.n_items() as f64
}

/// Fraction of items on which both raters chose the same label.
pub fn percent_agreement(table: &RatingsTable) -> Result<AgreementResult, AgreementError> {
    two_raters(table, "percent agreement")?;
    let p_o = observed_pairwise(table);
    Ok(AgreementResult {
        statistic: Statistic::Percent,
        value: p_o,
        observed_agreement: p_o,
        chance_agreement: 0.0,
        n_items: table.n_items(),
        n_raters: 2,
        confusion: None,
    })
}

/// Cohen's kappa with the product-of-marginals chance term.
pub fn cohen_kappa(table: &RatingsTable) -> Result<AgreementResult, AgreementError> {
    two_raters(table, "Cohen's kappa")?;
    let categories = table.categories();
    let index: HashMap<&str, usize> = categories.iter().enumerate().map(|(i, c)| (*c, i)).collect();
    let k = categories.len();
    let mut counts = vec![vec![0u64; k]; k];
    for row in &table.cells {
        counts[index[row[0].as_str()]][index[row[1].as_str()]] += 1;
    }
    if k < 2 {
        return Err(AgreementError::Undefined);
    }
    let n = table.n_items() as f64;
    let p_o = (0..k).map(|c| counts[c][c]).sum::<u64>() as f64 / n;
    let p_e: f64 = (0..k)
        .map(|c| {
            let m1 = counts[c].iter().sum::<u64>() as f64 / n;
            let m2 = counts.iter().map(|row| row[c]).sum::<u64>() as f64 / n;
            m1 * m2
        })
        .sum();
    Ok(AgreementResult {
        statistic: Statistic::CohenKappa,
        value: (p_o - p_e) / (1.0 - p_e),
        observed_agreement: p_o,
        chance_agreement: p_e,
        n_items: table.n_items(),
        n_raters: 2,
        confusion: Some(ConfusionMatrix {
            categories: categories.iter().map(|c| c.to_string()).collect(),
            counts,
        }),
    })
}

/// Fleiss' kappa for a fixed number of raters per item.
pub fn fleiss_kappa(table: &RatingsTable) -> Result<AgreementResult, AgreementError> {
    let n = table.raters.len();
    if n < 2 {
        return Err(AgreementError::TooFewRaters(n));
    }
    if table.items.is_empty() {
        return Err(AgreementError::Empty);
    }
    let categories = table.categories();
    if categories.len() < 2 {
        return Err(AgreementError::Undefined);
    }
    let index: HashMap<&str, usize> = categories.iter().enumerate().map(|(i, c)| (*c, i)).collect();
    let k = categories.len();
    let n_f = n as f64;
    let mut totals = vec![0u64; k];
    let mut p_sum = 0.0;
    for row in &table.cells {
        let mut n_ic = vec![0u64; k];
        for label in row {
            n_ic[index[label.as_str()]] += 1;
        }
        let sq: u64 = n_ic.iter().map(|c| c * c).sum();
        p_sum += (sq as f64 - n_f) / (n_f * (n_f - 1.0));
        for (t, c) in totals.iter_mut().zip(&n_ic) {
            *t += c;
        }
    }
    let items = table.n_items() as f64;
    let p_bar = p_sum / items;
    let p_e: f64 = totals
        .iter()
        .map(|&t| {
            let p = t as f64 / (items * n_f);
            p * p
        })
        .sum();
    Ok(AgreementResult {
        statistic: Statistic::FleissKappa,
        value: (p_bar - p_e) / (1.0 - p_e),
        observed_agreement: p_bar,
        chance_agreement: p_e,
        n_items: table.n_items(),
        n_raters: n,
        confusion: None,
    })
}
