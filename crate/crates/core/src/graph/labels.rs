use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::UserId;
use crate::{Error, Result};

/// Engagement tier of a labeled user. Supporters follow five or more party
/// members and sympathizers two or fewer; the tier is stored as given and
/// never recomputed here.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Member,
    Supporter,
    Sympathizer,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::Member, Tier::Supporter, Tier::Sympathizer];

    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Member => "member",
            Tier::Supporter => "supporter",
            Tier::Sympathizer => "sympathizer",
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "member" => Ok(Tier::Member),
            "supporter" => Ok(Tier::Supporter),
            "sympathizer" => Ok(Tier::Sympathizer),
            _ => Err(Error::data(format!(
                "unknown tier {s:?} (expected member, supporter, sympathizer)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Label {
    pub region: String,
    pub party: String,
    pub tier: Tier,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartyEntry {
    pub name: String,
    /// `#rrggbb`
    pub color: String,
}

const PALETTE: [&str; 10] = [
    "#e6ab02", "#1f78b4", "#e31a1c", "#33a02c", "#ff7f00", "#6a3d9a", "#a6761d", "#1b9e77",
    "#e7298a", "#666666",
];

/// Party assignments plus per-region ordered party catalogs. A party's
/// position in its region's catalog is its class index.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelSet {
    assignments: BTreeMap<UserId, Label>,
    catalog: BTreeMap<String, Vec<PartyEntry>>,
}

impl LabelSet {
    pub fn new(catalog: BTreeMap<String, Vec<PartyEntry>>) -> Self {
        LabelSet {
            assignments: BTreeMap::new(),
            catalog,
        }
    }

    /// Insert a label. With `extend_catalog` unknown parties are appended to
    /// the region catalog; otherwise they are an error.
    pub fn insert(&mut self, user: UserId, label: Label, extend_catalog: bool) -> Result<()> {
        if self.assignments.contains_key(&user) {
            return Err(Error::data(format!("user {user} is labeled more than once")));
        }
        let parties = self.catalog.entry(label.region.clone()).or_default();
        if !parties.iter().any(|p| p.name == label.party) {
            if !extend_catalog {
                return Err(Error::data(format!(
                    "party {:?} of user {user} is not in the catalog for region {:?}",
                    label.party, label.region
                )));
            }
            let color = PALETTE[parties.len() % PALETTE.len()].to_string();
            parties.push(PartyEntry {
                name: label.party.clone(),
                color,
            });
        }
        self.assignments.insert(user, label);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn get(&self, user: UserId) -> Option<&Label> {
        self.assignments.get(&user)
    }

    pub fn iter(&self) -> impl Iterator<Item = (UserId, &Label)> {
        self.assignments.iter().map(|(&u, l)| (u, l))
    }

    pub fn regions(&self) -> impl Iterator<Item = &str> {
        self.catalog.keys().map(String::as_str)
    }

    pub fn catalog(&self) -> &BTreeMap<String, Vec<PartyEntry>> {
        &self.catalog
    }

    pub fn parties(&self, region: &str) -> Option<&[PartyEntry]> {
        self.catalog.get(region).map(Vec::as_slice)
    }

    pub fn party_names(&self, region: &str) -> Vec<String> {
        self.parties(region)
            .map(|ps| ps.iter().map(|p| p.name.clone()).collect())
            .unwrap_or_default()
    }

    pub fn class_index(&self, region: &str, party: &str) -> Option<usize> {
        self.parties(region)?.iter().position(|p| p.name == party)
    }

    /// Users of `region` (all regions when `None`) in `tier`, with class
    /// indices, in ascending id order.
    pub fn select(&self, region: Option<&str>, tier: Option<Tier>) -> Vec<(UserId, usize)> {
        self.assignments
            .iter()
            .filter(|(_, l)| region.map_or(true, |r| l.region == r))
            .filter(|(_, l)| tier.map_or(true, |t| l.tier == t))
            .map(|(&u, l)| {
                let class = self
                    .class_index(&l.region, &l.party)
                    .expect("catalog covers every label");
                (u, class)
            })
            .collect()
    }

    /// Labels restricted to one region.
    pub fn region_subset(&self, region: &str) -> LabelSet {
        let mut catalog = BTreeMap::new();
        if let Some(ps) = self.catalog.get(region) {
            catalog.insert(region.to_string(), ps.clone());
        }
        LabelSet {
            assignments: self
                .assignments
                .iter()
                .filter(|(_, l)| l.region == region)
                .map(|(&u, l)| (u, l.clone()))
                .collect(),
            catalog,
        }
    }
}

fn lines_of<'a, R: Read + 'a>(
    reader: R,
    origin: &'a Path,
) -> impl Iterator<Item = Result<(usize, Vec<String>)>> + 'a {
    BufReader::new(reader)
        .lines()
        .enumerate()
        .filter_map(move |(i, line)| match line {
            Err(e) => Some(Err(Error::io(origin, e))),
            Ok(l) => {
                let t = l.trim();
                if t.is_empty() || t.starts_with('#') {
                    None
                } else {
                    Some(Ok((i + 1, t.split_whitespace().map(str::to_string).collect())))
                }
            }
        })
}

/// Catalog file: `region party #rrggbb` per line, in class order.
pub fn ingest_catalog(path: &Path) -> Result<BTreeMap<String, Vec<PartyEntry>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut catalog: BTreeMap<String, Vec<PartyEntry>> = BTreeMap::new();
    for rec in lines_of(file, path) {
        let (line, f) = rec?;
        let bad = |msg: &str| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: msg.to_string(),
        };
        if f.len() != 3 {
            return Err(bad("expected region, party, color"));
        }
        let color = &f[2];
        if !(color.len() == 7
            && color.starts_with('#')
            && color[1..].chars().all(|c| c.is_ascii_hexdigit()))
        {
            return Err(bad("color must be #rrggbb"));
        }
        let parties = catalog.entry(f[0].clone()).or_default();
        if parties.iter().any(|p| p.name == f[1]) {
            return Err(bad("duplicate party"));
        }
        parties.push(PartyEntry {
            name: f[1].clone(),
            color: color.to_ascii_lowercase(),
        });
    }
    Ok(catalog)
}

/// Label file: `user_id region party tier` per line. The catalog is
/// inferred in order of first appearance.
pub fn ingest_labels(path: &Path) -> Result<LabelSet> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_labels(file, path, None)
}

pub fn ingest_labels_with_catalog(path: &Path, catalog_path: &Path) -> Result<LabelSet> {
    let catalog = ingest_catalog(catalog_path)?;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_labels(file, path, Some(catalog))
}

pub fn read_labels<R: Read>(
    reader: R,
    origin: &Path,
    catalog: Option<BTreeMap<String, Vec<PartyEntry>>>,
) -> Result<LabelSet> {
    let extend = catalog.is_none();
    let mut set = LabelSet::new(catalog.unwrap_or_default());
    for rec in lines_of(reader, origin) {
        let (line, f) = rec?;
        let wrap = |e: Error| Error::Parse {
            path: origin.to_path_buf(),
            line,
            msg: match e {
                Error::Data(m) => m,
                other => other.to_string(),
            },
        };
        if f.len() != 4 {
            return Err(wrap(Error::data(format!(
                "expected user_id, region, party, tier; found {} fields",
                f.len()
            ))));
        }
        let user = f[0]
            .parse::<u64>()
            .map(UserId)
            .map_err(|_| wrap(Error::data(format!("invalid user id {:?}", f[0]))))?;
        let tier: Tier = f[3].parse().map_err(wrap)?;
        set.insert(
            user,
            Label {
                region: f[1].clone(),
                party: f[2].clone(),
                tier,
            },
            extend,
        )
        .map_err(wrap)?;
    }
    Ok(set)
}

pub fn write_labels<W: Write>(labels: &LabelSet, mut out: W) -> std::io::Result<()> {
    for (u, l) in labels.iter() {
        writeln!(out, "{u}\t{}\t{}\t{}", l.region, l.party, l.tier)?;
    }
    out.flush()
}

pub fn write_catalog<W: Write>(labels: &LabelSet, mut out: W) -> std::io::Result<()> {
    for (region, parties) in labels.catalog() {
        for p in parties {
            writeln!(out, "{region}\t{}\t{}", p.name, p.color)?;
        }
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<LabelSet> {
        read_labels(text.as_bytes(), Path::new("<mem>"), None)
    }

    #[test]
    fn single_record() {
        let set = parse("42 SCT SNP member\n").unwrap();
        assert_eq!(
            set.get(UserId(42)),
            Some(&Label {
                region: "SCT".into(),
                party: "SNP".into(),
                tier: Tier::Member
            })
        );
    }

    #[test]
    fn duplicate_user_names_the_id() {
        let err = parse("42 SCT SNP member\n42 SCT SL member\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("42"), "{msg}");
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn unknown_tier_rejected() {
        assert!(parse("1 SCT SNP voter\n").is_err());
    }

    #[test]
    fn catalog_membership_enforced() {
        let mut catalog = BTreeMap::new();
        catalog.insert(
            "SCT".to_string(),
            vec![PartyEntry { name: "SNP".into(), color: "#ffff00".into() }],
        );
        let ok = read_labels("1 SCT SNP member\n".as_bytes(), Path::new("x"), Some(catalog.clone()));
        assert!(ok.is_ok());
        let err = read_labels("1 SCT SL member\n".as_bytes(), Path::new("x"), Some(catalog));
        assert!(err.is_err());
    }

    #[test]
    fn scotland_member_counts_total() {
        let counts = [("SNP", 184), ("SCU", 59), ("SL", 52), ("SGP", 42), ("SLD", 24)];
        let mut text = String::new();
        let mut id = 0;
        for (party, n) in counts {
            for _ in 0..n {
                text.push_str(&format!("{id} SCT {party} member\n"));
                id += 1;
            }
        }
        let set = parse(&text).unwrap();
        assert_eq!(set.select(Some("SCT"), Some(Tier::Member)).len(), 361);
        assert_eq!(set.party_names("SCT"), vec!["SNP", "SCU", "SL", "SGP", "SLD"]);
        assert_eq!(set.class_index("SCT", "SGP"), Some(3));
    }

    #[test]
    fn write_read_round_trip() {
        let set = parse("3 WAL PC supporter\n1 WAL WL member\n").unwrap();
        let mut buf = Vec::new();
        write_labels(&set, &mut buf).unwrap();
        let back = parse(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back.get(UserId(3)).unwrap().tier, Tier::Supporter);
    }
}
