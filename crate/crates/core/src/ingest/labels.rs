use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FIRST_YEAR: i32 = 2000;
pub const LAST_YEAR: i32 = 2020;

/// One observed EPWA value for a unit in a year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub unit_id: String,
    pub country_iso3: String,
    pub region_code: String,
    pub admin_level: u8,
    pub year: i32,
    pub epwa: f64,
}

impl LabelRecord {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epwa) {
            return Err(Error::Label(format!(
                "{}@{}: epwa {} outside [0, 1]",
                self.unit_id, self.year, self.epwa
            )));
        }
        if !(FIRST_YEAR..=LAST_YEAR).contains(&self.year) {
            return Err(Error::Label(format!(
                "{}: year {} outside [{FIRST_YEAR}, {LAST_YEAR}]",
                self.unit_id, self.year
            )));
        }
        if self.admin_level > 2 {
            return Err(Error::Label(format!(
                "{}: admin level {} not in 0..=2",
                self.unit_id, self.admin_level
            )));
        }
        if self.admin_level == 0 && self.unit_id != self.country_iso3 {
            return Err(Error::Label(format!(
                "national record `{}` must use its ISO3 code `{}` as unit id",
                self.unit_id, self.country_iso3
            )));
        }
        Ok(())
    }

    pub fn key(&self) -> (String, i32) {
        (self.unit_id.clone(), self.year)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    NationalOnly,
    Subnational,
}

/// The merged training label set.
///
/// `records` holds national records for countries without subnational data
/// and subnational records for the rest. National records displaced by
/// subnational data are kept in `withheld_national` for multiscale validation.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSet {
    pub records: Vec<LabelRecord>,
    pub withheld_national: Vec<LabelRecord>,
    pub provenance: BTreeMap<String, Provenance>,
}

fn duplicates<'a>(records: impl IntoIterator<Item = &'a LabelRecord>) -> Vec<(String, i32)> {
    let mut seen = BTreeSet::new();
    let mut dup = BTreeSet::new();
    for r in records {
        if !seen.insert((r.unit_id.as_str(), r.year)) {
            dup.insert((r.unit_id.clone(), r.year));
        }
    }
    dup.into_iter().collect()
}

fn sort_records(records: &mut [LabelRecord]) {
    records.sort_by(|a, b| {
        (&a.country_iso3, a.admin_level, &a.unit_id, a.year).cmp(&(
            &b.country_iso3,
            b.admin_level,
            &b.unit_id,
            b.year,
        ))
    });
}

/// Combines national and subnational labels, using a country's national
/// records only when it has no subnational records.
pub fn merge_labels(national: &[LabelRecord], subnational: &[LabelRecord]) -> Result<LabelSet> {
    for r in national.iter().chain(subnational) {
        r.validate()?;
    }
    if let Some(r) = national.iter().find(|r| r.admin_level != 0) {
        return Err(Error::Label(format!(
            "national input contains admin level {} record `{}`",
            r.admin_level, r.unit_id
        )));
    }
    if let Some(r) = subnational.iter().find(|r| r.admin_level == 0) {
        return Err(Error::Label(format!(
            "subnational input contains national record `{}`",
            r.unit_id
        )));
    }
    let dup = duplicates(national.iter().chain(subnational));
    if !dup.is_empty() {
        return Err(Error::Duplicate(dup));
    }

    let with_sub: BTreeSet<&str> = subnational
        .iter()
        .map(|r| r.country_iso3.as_str())
        .collect();
    let mut records = subnational.to_vec();
    let mut withheld = Vec::new();
    for r in national {
        if with_sub.contains(r.country_iso3.as_str()) {
            withheld.push(r.clone());
        } else {
            records.push(r.clone());
        }
    }
    sort_records(&mut records);
    sort_records(&mut withheld);

    let provenance = records
        .iter()
        .map(|r| {
            let p = if with_sub.contains(r.country_iso3.as_str()) {
                Provenance::Subnational
            } else {
                Provenance::NationalOnly
            };
            (r.country_iso3.clone(), p)
        })
        .collect();
    Ok(LabelSet {
        records,
        withheld_national: withheld,
        provenance,
    })
}

impl LabelSet {
    /// Splits mixed-level records by admin level and merges them.
    pub fn from_records(records: &[LabelRecord]) -> Result<Self> {
        let (national, sub): (Vec<_>, Vec<_>) =
            records.iter().cloned().partition(|r| r.admin_level == 0);
        merge_labels(&national, &sub)
    }

    pub fn subnational_countries(&self) -> BTreeSet<&str> {
        self.provenance
            .iter()
            .filter(|(_, p)| **p == Provenance::Subnational)
            .map(|(c, _)| c.as_str())
            .collect()
    }

    pub fn countries(&self) -> BTreeSet<&str> {
        self.provenance.keys().map(String::as_str).collect()
    }

    pub fn national(&self) -> impl Iterator<Item = &LabelRecord> {
        self.records.iter().filter(|r| r.admin_level == 0)
    }

    pub fn subnational(&self) -> impl Iterator<Item = &LabelRecord> {
        self.records.iter().filter(|r| r.admin_level > 0)
    }

    /// Region code per country, taken from any record of that country.
    pub fn country_regions(&self) -> BTreeMap<&str, &str> {
        self.records
            .iter()
            .chain(&self.withheld_national)
            .map(|r| (r.country_iso3.as_str(), r.region_code.as_str()))
            .collect()
    }
}

pub fn read_labels(path: &Path) -> Result<Vec<LabelRecord>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    rdr.deserialize()
        .map(|r| r.map_err(|e: csv::Error| Error::format(path, e.to_string())))
        .collect()
}

pub fn write_labels(records: &[LabelRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nat(c: &str, year: i32, epwa: f64) -> LabelRecord {
        LabelRecord {
            unit_id: c.into(),
            country_iso3: c.into(),
            region_code: "R".into(),
            admin_level: 0,
            year,
            epwa,
        }
    }

    fn sub(c: &str, unit: &str, year: i32, epwa: f64) -> LabelRecord {
        LabelRecord {
            unit_id: unit.into(),
            country_iso3: c.into(),
            region_code: "R".into(),
            admin_level: 1,
            year,
            epwa,
        }
    }

    #[test]
    fn spain_national_records_are_displaced() {
        let national = vec![
            nat("ESP", 2010, 0.04),
            nat("KEN", 2010, 0.33),
            nat("KEN", 2015, 0.3),
        ];
        let subnational = vec![
            sub("ESP", "ESP.1", 2010, 0.1),
            sub("ESP", "ESP.2", 2010, 0.02),
        ];
        let set = merge_labels(&national, &subnational).unwrap();
        assert!(set.records.iter().all(|r| r.unit_id != "ESP"));
        assert_eq!(
            set.national().filter(|r| r.country_iso3 == "KEN").count(),
            2
        );
        assert_eq!(set.withheld_national, vec![nat("ESP", 2010, 0.04)]);
        assert_eq!(set.provenance["ESP"], Provenance::Subnational);
        assert_eq!(set.provenance["KEN"], Provenance::NationalOnly);
    }

    #[test]
    fn duplicates_are_listed() {
        let national = vec![nat("KEN", 2010, 0.3), nat("KEN", 2010, 0.31)];
        match merge_labels(&national, &[]) {
            Err(Error::Duplicate(d)) => assert_eq!(d, vec![("KEN".to_string(), 2010)]),
            other => panic!("expected duplicate error, got {other:?}"),
        }
    }

    #[test]
    fn level_preconditions_and_domain() {
        assert!(merge_labels(&[sub("ESP", "ESP.1", 2010, 0.1)], &[]).is_err());
        assert!(merge_labels(&[], &[nat("ESP", 2010, 0.1)]).is_err());
        assert!(merge_labels(&[nat("KEN", 2010, 1.2)], &[]).is_err());
        assert!(merge_labels(&[nat("KEN", 1999, 0.2)], &[]).is_err());
        let mut bad = nat("KEN", 2010, 0.2);
        bad.unit_id = "KEN.1".into();
        assert!(merge_labels(&[bad], &[]).is_err());
    }

    #[test]
    fn merge_is_idempotent() {
        let national = vec![nat("ESP", 2010, 0.04), nat("KEN", 2010, 0.33)];
        let subnational = vec![sub("ESP", "ESP.1", 2011, 0.1)];
        let once = merge_labels(&national, &subnational).unwrap();
        let national_part: Vec<_> = once.national().cloned().collect();
        let twice = merge_labels(&national_part, &subnational).unwrap();
        assert_eq!(twice.records, once.records);
        assert_eq!(
            LabelSet::from_records(&once.records).unwrap().records,
            once.records
        );
    }
}
