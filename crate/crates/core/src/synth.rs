//! Seeded generator of tiered multi-party retweet graphs with ground-truth
//! labels.
//!
//! Every user belongs to one party. A retweet by a user of tier `t` stays
//! within the party with probability `1 - mu_t`, landing on a party user
//! drawn with members weighted `1 + hub_bias` and everyone else weighted 1.
//! Otherwise it goes to a member of another party chosen uniformly.
//! Interacting users get a random party and sympathizer-level mixing but no
//! label. Per-user activity is log-normal with a per-tier multiplier of the
//! mean.

use std::collections::{BTreeMap, HashMap};

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_distr::LogNormal;
use serde::{Deserialize, Serialize};

use crate::graph::{InteractionGraph, Label, LabelSet, PartyEntry, Tier, UserId};
use crate::{rng, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub name: String,
    pub parties: Vec<String>,
    /// Optional `#rrggbb` per party.
    #[serde(default)]
    pub colors: Vec<String>,
    pub members_per_party: usize,
    pub supporters_per_party: usize,
    pub sympathizers_per_party: usize,
    pub interacting_users: usize,
}

/// Probability that a retweet crosses party lines, per tier.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mixing {
    pub member: f64,
    pub supporter: f64,
    pub sympathizer: f64,
}

impl Mixing {
    pub fn of(&self, tier: Tier) -> f64 {
        match tier {
            Tier::Member => self.member,
            Tier::Supporter => self.supporter,
            Tier::Sympathizer => self.sympathizer,
        }
    }

    pub fn uniform(mu: f64) -> Self {
        Mixing {
            member: mu,
            supporter: mu,
            sympathizer: mu,
        }
    }
}

/// Per-tier multipliers of the mean activity. Interacting users use
/// `interacting`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Engagement {
    pub member: f64,
    pub supporter: f64,
    pub sympathizer: f64,
    pub interacting: f64,
}

impl Default for Engagement {
    fn default() -> Self {
        Engagement {
            member: 1.0,
            supporter: 1.0,
            sympathizer: 1.0,
            interacting: 1.0,
        }
    }
}

impl Engagement {
    pub fn of(&self, tier: Option<Tier>) -> f64 {
        match tier {
            Some(Tier::Member) => self.member,
            Some(Tier::Supporter) => self.supporter,
            Some(Tier::Sympathizer) => self.sympathizer,
            None => self.interacting,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub regions: Vec<RegionSpec>,
    pub mixing: Mixing,
    /// Mean retweets per user.
    pub retweets_per_user: f64,
    /// Log-scale spread of per-user activity.
    #[serde(default = "default_sigma")]
    pub activity_sigma: f64,
    #[serde(default)]
    pub engagement: Engagement,
    pub hub_bias: f64,
    pub seed: u64,
}

fn default_sigma() -> f64 {
    1.0
}

fn region(name: &str, parties: &[(&str, &str)], interacting: usize) -> RegionSpec {
    RegionSpec {
        name: name.into(),
        parties: parties.iter().map(|p| p.0.to_string()).collect(),
        colors: parties.iter().map(|p| p.1.to_string()).collect(),
        members_per_party: 40,
        supporters_per_party: 90,
        sympathizers_per_party: 85,
        interacting_users: interacting,
    }
}

impl SynthConfig {
    /// Three regions shaped after the Scottish, Welsh and Northern Irish
    /// party systems. Members, the party officials, are three times as active
    /// as other users.
    pub fn uk_like(seed: u64) -> Self {
        SynthConfig {
            regions: vec![
                region(
                    "SCT",
                    &[
                        ("SNP", "#d4b300"),
                        ("SCU", "#0087dc"),
                        ("SL", "#e4003b"),
                        ("SGP", "#00b140"),
                        ("SLD", "#faa61a"),
                    ],
                    5000,
                ),
                region(
                    "WAL",
                    &[("WL", "#e4003b"), ("WC", "#0087dc"), ("PC", "#005b54"), ("WLD", "#faa61a")],
                    5000,
                ),
                region(
                    "NIR",
                    &[
                        ("SF", "#326760"),
                        ("DUP", "#d46a4c"),
                        ("APNI", "#c9a100"),
                        ("UUP", "#48a5ee"),
                        ("SDLP", "#2aa82c"),
                    ],
                    5000,
                ),
            ],
            mixing: Mixing {
                member: 0.05,
                supporter: 0.15,
                sympathizer: 0.35,
            },
            retweets_per_user: 33.0,
            activity_sigma: 1.0,
            engagement: Engagement {
                member: 3.0,
                supporter: 1.0,
                sympathizer: 1.0,
                interacting: 1.0,
            },
            hub_bias: 50.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.regions.is_empty() {
            return Err(Error::config("synth config has no regions"));
        }
        for m in [self.mixing.member, self.mixing.supporter, self.mixing.sympathizer] {
            if !(0.0..=1.0).contains(&m) {
                return Err(Error::config(format!("mixing {m} outside [0, 1]")));
            }
        }
        let e = self.engagement;
        if [e.member, e.supporter, e.sympathizer, e.interacting].iter().any(|m| !(*m > 0.0)) {
            return Err(Error::config("engagement multipliers must be positive"));
        }
        if !(self.retweets_per_user > 0.0) || !(self.activity_sigma >= 0.0) || !(self.hub_bias >= 0.0) {
            return Err(Error::config("retweets_per_user must be > 0, activity_sigma and hub_bias >= 0"));
        }
        let mut names = std::collections::BTreeSet::new();
        for r in &self.regions {
            if !names.insert(&r.name) {
                return Err(Error::config(format!("region {} listed twice", r.name)));
            }
            if r.parties.len() < 2 {
                return Err(Error::config(format!("region {} needs at least two parties", r.name)));
            }
            if r.members_per_party == 0 || r.supporters_per_party == 0 || r.sympathizers_per_party == 0 {
                return Err(Error::config(format!("region {}: tier sizes must be >= 1", r.name)));
            }
            if !r.colors.is_empty() && r.colors.len() != r.parties.len() {
                return Err(Error::config(format!("region {}: one color per party", r.name)));
            }
        }
        Ok(())
    }
}

struct Person {
    id: UserId,
    party: usize,
    tier: Option<Tier>,
}

/// Ids are `(region + 1) * 10^7 + k`, so regions never collide.
const REGION_STRIDE: u64 = 10_000_000;

pub fn generate(cfg: &SynthConfig) -> Result<(InteractionGraph, LabelSet)> {
    let out = generate_with_truth(cfg)?;
    Ok((out.graph, out.labels))
}

/// Generated graph and labels plus the party of every user, including the
/// unlabeled interacting ones.
#[derive(Clone, Debug)]
pub struct SynthOutput {
    pub graph: InteractionGraph,
    pub labels: LabelSet,
    /// User -> (region, party name).
    pub parties: HashMap<UserId, (String, String)>,
}

impl SynthOutput {
    /// Crossing and total retweet counts of sources in `tier`, or of the
    /// unlabeled interacting users when `tier` is `None`.
    pub fn crossing_counts(&self, tier: Option<Tier>) -> (u64, u64) {
        let (mut cross, mut total) = (0, 0);
        for e in self.graph.edges() {
            if self.labels.get(e.source).map(|l| l.tier) != tier {
                continue;
            }
            total += e.count;
            if self.parties[&e.source] != self.parties[&e.target] {
                cross += e.count;
            }
        }
        (cross, total)
    }

    /// Retweets whose source belongs to `region`, plus every user of it.
    pub fn region_graph(&self, region: &str) -> Result<InteractionGraph> {
        let in_region = |u: &UserId| self.parties.get(u).is_some_and(|(r, _)| r == region);
        let records = self
            .graph
            .edges()
            .filter(|e| in_region(&e.source))
            .map(|e| (e.source, e.target, e.count));
        let users = self.graph.users().iter().copied().filter(in_region);
        InteractionGraph::from_records_with_users(records, users)
    }
}

pub fn generate_with_truth(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let mut parties = HashMap::new();
    let mut catalog = BTreeMap::new();
    for r in &cfg.regions {
        let entries = r
            .parties
            .iter()
            .enumerate()
            .map(|(i, p)| PartyEntry {
                name: p.clone(),
                color: r.colors.get(i).cloned().unwrap_or_else(|| default_color(i)),
            })
            .collect();
        catalog.insert(r.name.clone(), entries);
    }
    let mut labels = LabelSet::new(catalog);
    let mut records: HashMap<(UserId, UserId), u64> = HashMap::new();
    let mut all_users = Vec::new();
    let mu_log = cfg.retweets_per_user.ln() - cfg.activity_sigma * cfg.activity_sigma / 2.0;
    let activity = LogNormal::new(mu_log, cfg.activity_sigma).map_err(|e| Error::config(e.to_string()))?;
    for (ri, spec) in cfg.regions.iter().enumerate() {
        let mut r = rng::stream(cfg.seed, &[0x5F17, ri as u64]);
        let k = spec.parties.len();
        let mut people = Vec::new();
        let mut next = (ri as u64 + 1) * REGION_STRIDE;
        for party in 0..k {
            for (tier, count) in [
                (Tier::Member, spec.members_per_party),
                (Tier::Supporter, spec.supporters_per_party),
                (Tier::Sympathizer, spec.sympathizers_per_party),
            ] {
                for _ in 0..count {
                    next += 1;
                    people.push(Person {
                        id: UserId(next),
                        party,
                        tier: Some(tier),
                    });
                }
            }
        }
        for _ in 0..spec.interacting_users {
            next += 1;
            people.push(Person {
                id: UserId(next),
                party: r.gen_range(0..k),
                tier: None,
            });
        }
        for p in &people {
            if let Some(tier) = p.tier {
                let label = Label {
                    region: spec.name.clone(),
                    party: spec.parties[p.party].clone(),
                    tier,
                };
                labels.insert(p.id, label, false)?;
            }
            all_users.push(p.id);
            parties.insert(p.id, (spec.name.clone(), spec.parties[p.party].clone()));
        }
        let mut pools: Vec<Vec<usize>> = vec![Vec::new(); k];
        let mut pool_weights: Vec<Vec<f64>> = vec![Vec::new(); k];
        let mut members: Vec<usize> = Vec::new();
        for (i, p) in people.iter().enumerate() {
            let is_member = p.tier == Some(Tier::Member);
            pools[p.party].push(i);
            pool_weights[p.party].push(if is_member { 1.0 + cfg.hub_bias } else { 1.0 });
            if is_member {
                members.push(i);
            }
        }
        let samplers: Vec<WeightedIndex<f64>> = pool_weights
            .iter()
            .map(|w| WeightedIndex::new(w).expect("positive weights"))
            .collect();
        for (i, p) in people.iter().enumerate() {
            let mu = cfg.mixing.of(p.tier.unwrap_or(Tier::Sympathizer));
            let scale = cfg.engagement.of(p.tier);
            let n_rt = ((scale * activity.sample(&mut r)).round() as u64).max(1);
            for _ in 0..n_rt {
                let target = if r.gen_bool(mu) {
                    loop {
                        let m = members[r.gen_range(0..members.len())];
                        if people[m].party != p.party {
                            break Some(m);
                        }
                    }
                } else if pools[p.party].len() > 1 {
                    loop {
                        let t = pools[p.party][samplers[p.party].sample(&mut r)];
                        if t != i {
                            break Some(t);
                        }
                    }
                } else {
                    None
                };
                if let Some(t) = target {
                    *records.entry((p.id, people[t].id)).or_insert(0) += 1;
                }
            }
        }
    }
    let mut edges: Vec<(UserId, UserId, u64)> = records.into_iter().map(|((s, t), c)| (s, t, c)).collect();
    edges.sort_unstable();
    let graph = InteractionGraph::from_records_with_users(edges, all_users)?;
    Ok(SynthOutput { graph, labels, parties })
}

fn default_color(i: usize) -> String {
    const COLORS: [&str; 8] = ["#1f78b4", "#e31a1c", "#33a02c", "#ff7f00", "#6a3d9a", "#b15928", "#a6cee3", "#fb9a99"];
    COLORS[i % COLORS.len()].to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(mixing: Mixing, seed: u64) -> SynthConfig {
        SynthConfig {
            regions: vec![RegionSpec {
                name: "R".into(),
                parties: vec!["A".into(), "B".into(), "C".into()],
                colors: vec![],
                members_per_party: 10,
                supporters_per_party: 20,
                sympathizers_per_party: 20,
                interacting_users: 100,
            }],
            mixing,
            retweets_per_user: 30.0,
            activity_sigma: 1.0,
            engagement: Engagement::default(),
            hub_bias: 20.0,
            seed,
        }
    }

    #[test]
    fn no_mixing_means_no_crossing() {
        let out = generate_with_truth(&small(Mixing::uniform(0.0), 1)).unwrap();
        for t in [Some(Tier::Member), Some(Tier::Supporter), Some(Tier::Sympathizer), None] {
            let (c, total) = out.crossing_counts(t);
            assert!(total > 0);
            assert_eq!(c, 0);
        }
    }

    #[test]
    fn full_mixing_always_crosses() {
        let out = generate_with_truth(&small(Mixing::uniform(1.0), 2)).unwrap();
        let (c, t) = out.crossing_counts(Some(Tier::Sympathizer));
        assert!(t > 1000);
        assert_eq!(c, t);
    }

    #[test]
    fn crossing_fraction_within_three_sigma() {
        let mixing = Mixing { member: 0.05, supporter: 0.15, sympathizer: 0.35 };
        let out = generate_with_truth(&small(mixing, 7)).unwrap();
        for (tier, mu) in [(Some(Tier::Member), 0.05), (Some(Tier::Supporter), 0.15), (Some(Tier::Sympathizer), 0.35), (None, 0.35)] {
            let (c, t) = out.crossing_counts(tier);
            let sd = (t as f64 * mu * (1.0 - mu)).sqrt();
            assert!((c as f64 - mu * t as f64).abs() <= 3.0 * sd, "{tier:?}: {c}/{t}");
        }
    }

    #[test]
    fn deterministic() {
        let cfg = small(Mixing::uniform(0.2), 3);
        let (a, la) = generate(&cfg).unwrap();
        let (b, lb) = generate(&cfg).unwrap();
        assert_eq!(a.edges().collect::<Vec<_>>(), b.edges().collect::<Vec<_>>());
        assert_eq!(la, lb);
    }

    #[test]
    fn region_graphs_partition_edges() {
        let mut cfg = small(Mixing::uniform(0.3), 6);
        let mut second = cfg.regions[0].clone();
        second.name = "S".into();
        cfg.regions.push(second);
        let out = generate_with_truth(&cfg).unwrap();
        let r = out.region_graph("R").unwrap();
        let s = out.region_graph("S").unwrap();
        assert_eq!(r.num_users() + s.num_users(), out.graph.num_users());
        assert_eq!(r.stats().retweets + s.stats().retweets, out.graph.stats().retweets);
        assert!(r.users().iter().all(|u| out.parties[u].0 == "R"));
    }

    #[test]
    fn tier_sizes_and_catalog() {
        let (g, l) = generate(&small(Mixing::uniform(0.1), 4)).unwrap();
        assert_eq!(l.len(), 150);
        assert_eq!(g.num_users(), 250);
        assert_eq!(l.party_names("R"), vec!["A", "B", "C"]);
        assert_eq!(l.select(Some("R"), Some(Tier::Member)).len(), 30);
    }

    #[test]
    fn members_are_hubs() {
        let (g, l) = generate(&small(Mixing::uniform(0.1), 5)).unwrap();
        let indeg = g.in_adjacency();
        let (mut m, mut mn, mut o, mut on) = (0.0, 0.0, 0.0, 0.0);
        for (i, &u) in g.users().iter().enumerate() {
            let w = indeg.total_weight(i as u32) as f64;
            if l.get(u).map(|x| x.tier) == Some(Tier::Member) {
                m += w;
                mn += 1.0;
            } else {
                o += w;
                on += 1.0;
            }
        }
        assert!(m / mn > o / on);
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = small(Mixing::uniform(1.5), 0);
        assert!(generate(&cfg).is_err());
        cfg.mixing = Mixing::uniform(0.1);
        cfg.regions[0].parties.truncate(1);
        assert!(generate(&cfg).is_err());
    }
}
