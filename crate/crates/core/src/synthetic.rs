//! Procedurally generated synthesis protocols with split-antecedent
//! anaphors. Each document is one or two sentences from a small set of
//! procedure families; the anaphor in the last sentence refers to the
//! reagents and solvents named before it.
//!
//! Generation is a pure function of the seed, so the bundled files under
//! `data/` can be regenerated bit-for-bit.

use crate::corpus::{Dataset, Example};
use crate::distill::UnlabeledDoc;
use crate::rng::SplitMix64;

const REAGENTS: &[&str] = &[
    "sodium hydride",
    "benzyl bromide",
    "triethylamine",
    "acetic anhydride",
    "potassium carbonate",
    "methyl iodide",
    "thionyl chloride",
    "sodium borohydride",
    "morpholine",
    "hydrazine hydrate",
    "4-chloroaniline",
    "phenylboronic acid",
    "bromoacetyl bromide",
    "cesium carbonate",
    "sodium azide",
    "oxalyl chloride",
    "benzylamine",
    "mesyl chloride",
];

const SOLVENTS: &[&str] = &[
    "water",
    "DCM",
    "THF",
    "ethanol",
    "methanol",
    "DMF",
    "toluene",
    "ethyl acetate",
    "dioxane",
    "acetonitrile",
    "DMSO",
    "acetone",
];

const AQUEOUS: &[&str] = &["brine", "water", "saturated NaHCO3", "1 M HCl", "aqueous NH4Cl"];

const CATALYSTS: &[&str] = &["Pd/C", "Raney nickel", "platinum oxide", "palladium hydroxide"];

/// A document under construction: text plus antecedent and anaphor spans.
struct Builder {
    text: String,
    len: usize,
    antecedents: Vec<(usize, usize)>,
    anaphor: Option<(usize, usize)>,
}

impl Builder {
    fn new() -> Self {
        Self {
            text: String::new(),
            len: 0,
            antecedents: Vec::new(),
            anaphor: None,
        }
    }

    fn t(&mut self, s: &str) -> &mut Self {
        self.text.push_str(s);
        self.len += s.chars().count();
        self
    }

    fn ante(&mut self, s: &str) -> &mut Self {
        let start = self.len;
        self.t(s);
        self.antecedents.push((start, self.len));
        self
    }

    fn ana(&mut self, s: &str) -> &mut Self {
        let start = self.len;
        self.t(s);
        self.anaphor = Some((start, self.len));
        self
    }
}

fn clashes(candidate: &str, avoid: &[&str]) -> bool {
    let c = candidate.to_lowercase();
    avoid.iter().any(|a| {
        let a = a.to_lowercase();
        c.contains(&a) || a.contains(&c)
    })
}

struct Gen {
    rng: SplitMix64,
}

impl Gen {
    fn pick<'a>(&mut self, pool: &[&'a str]) -> &'a str {
        pool[self.rng.below(pool.len() as u64) as usize]
    }

    /// A pool entry that neither equals, contains nor lies inside any of `avoid`.
    fn pick_distinct<'a>(&mut self, pool: &[&'a str], avoid: &[&str]) -> &'a str {
        loop {
            let c = self.pick(pool);
            if !clashes(c, avoid) {
                return c;
            }
        }
    }

    fn reagent(&mut self, avoid: &[&str]) -> String {
        if self.rng.below(3) == 0 {
            loop {
                let c = format!("compound {}", 1 + self.rng.below(99));
                if !clashes(&c, avoid) {
                    return c;
                }
            }
        }
        self.pick_distinct(REAGENTS, avoid).to_string()
    }

    fn mass(&mut self) -> String {
        format!("{}.{}", 1 + self.rng.below(4), self.rng.below(10))
    }

    fn volume(&mut self) -> u64 {
        5 * (1 + self.rng.below(10))
    }

    fn hours(&mut self) -> u64 {
        1 + self.rng.below(16)
    }

    fn capitalized(s: &str) -> String {
        let mut c = s.chars();
        match c.next() {
            Some(f) if f.is_lowercase() => f.to_uppercase().chain(c).collect(),
            Some(f) => std::iter::once(f).chain(c).collect(),
            None => String::new(),
        }
    }

    /// Appends one procedure sentence pair; `family` selects the layout.
    fn procedure(&mut self, b: &mut Builder, family: u64) {
        match family {
            0 => {
                let r1 = self.reagent(&[]);
                let r2 = self.reagent(&[&r1]);
                let s1 = self.pick_distinct(SOLVENTS, &[&r1, &r2]);
                let (m1, m2, v, h) = (self.mass(), self.mass(), self.volume(), self.hours());
                let ana = if self.rng.below(2) == 0 { "The mixture" } else { "The reaction mixture" };
                let t = 20 + 5 * self.rng.below(8);
                b.ante(&Self::capitalized(&r1));
                b.t(&format!(" ({m1} g) was added to a solution of "));
                b.ante(&r2).t(&format!(" ({m2} g) in ")).ante(s1).t(&format!(" ({v} mL). "));
                b.ana(ana).t(&format!(" was stirred at {t} °C for {h} h."));
            }
            1 => {
                let r1 = self.reagent(&[]);
                let s1 = self.pick_distinct(SOLVENTS, &[&r1]);
                let s2 = self.pick_distinct(SOLVENTS, &[&r1, s1]);
                let (m1, v1, v2, h) = (self.mass(), self.volume(), self.volume(), self.hours());
                let ana = if self.rng.below(2) == 0 { "The resulting solution" } else { "The solution" };
                b.ante(&Self::capitalized(&r1)).t(&format!(" ({m1} g) was dissolved in "));
                b.ante(s1).t(&format!(" ({v1} mL) and ")).ante(s2).t(&format!(" ({v2} mL). "));
                b.ana(ana).t(&format!(" was heated to reflux for {h} h."));
            }
            2 => {
                let s1 = self.pick_distinct(SOLVENTS, &["water", "DMSO", "DMF", "acetone", "methanol", "ethanol"]);
                let s2 = self.pick_distinct(AQUEOUS, &[s1]);
                let (v1, v2) = (self.volume(), self.volume());
                let ana = if self.rng.below(2) == 0 { "The biphasic mixture" } else { "The combined layers" };
                b.t("The crude product was partitioned between ");
                b.ante(s1).t(&format!(" ({v1} mL) and ")).ante(s2).t(&format!(" ({v2} mL). "));
                b.ana(ana).t(" were separated and the organic phase was dried over MgSO4.");
            }
            3 => {
                let cat = self.pick(CATALYSTS);
                let s1 = self.pick_distinct(SOLVENTS, &[cat]);
                let r1 = self.reagent(&[cat, s1]);
                let (m1, v, m2, h) = (10 * (1 + self.rng.below(20)), self.volume(), self.mass(), self.hours());
                b.ante(cat).t(&format!(" ({m1} mg) was suspended in "));
                b.ante(s1).t(&format!(" ({v} mL) containing ")).ante(&r1).t(&format!(" ({m2} g). "));
                b.ana("The suspension").t(&format!(" was stirred under hydrogen for {h} h."));
            }
            _ => {
                let r1 = self.reagent(&[]);
                let r2 = self.reagent(&[&r1]);
                let s1 = self.pick_distinct(SOLVENTS, &[&r1, &r2]);
                let (m1, m2, v, h) = (self.mass(), self.mass(), self.volume(), self.hours());
                b.ante(&Self::capitalized(&r1)).t(&format!(" ({m1} g) and "));
                b.ante(&r2).t(&format!(" ({m2} g) were combined in ")).ante(s1);
                b.t(&format!(" ({v} mL) at 0 °C. After {h} h, "));
                b.ana("the reaction mixture").t(" was poured into ice water.");
            }
        }
    }
}

pub const FAMILIES: u64 = 5;

/// `n` labeled examples, one anaphor per document, with ids
/// `{prefix}-{index:03}`.
pub fn generate_labeled(prefix: &str, n: usize, seed: u64) -> Dataset {
    let mut g = Gen {
        rng: SplitMix64::new(seed),
    };
    let examples = (0..n)
        .map(|i| {
            let mut b = Builder::new();
            let family = g.rng.below(FAMILIES);
            g.procedure(&mut b, family);
            let ana = b.anaphor.expect("every family places an anaphor");
            Example::from_offsets(format!("{prefix}-{i:03}"), b.text, ana, Some(&b.antecedents))
                .expect("generated spans are valid")
        })
        .collect();
    Dataset::new(prefix, examples).expect("generated keys are unique")
}

/// `n` unlabeled documents of two consecutive procedures each.
pub fn generate_unlabeled(prefix: &str, n: usize, seed: u64) -> Vec<UnlabeledDoc> {
    let mut g = Gen {
        rng: SplitMix64::new(seed),
    };
    (0..n)
        .map(|i| {
            let mut b = Builder::new();
            let f1 = g.rng.below(FAMILIES);
            g.procedure(&mut b, f1);
            b.t(" ");
            let f2 = g.rng.below(FAMILIES);
            g.procedure(&mut b, f2);
            UnlabeledDoc {
                doc_id: format!("{prefix}-{i:03}"),
                text: b.text,
            }
        })
        .collect()
}

/// Seeds and sizes of the files bundled under `data/`.
pub const TRAIN_SEED: u64 = 101;
pub const TEST_SEED: u64 = 202;
pub const UNLABELED_SEED: u64 = 303;
pub const TRAIN_SIZE: usize = 32;
pub const TEST_SIZE: usize = 64;
pub const UNLABELED_SIZE: usize = 24;

pub fn bundled_train() -> Dataset {
    generate_labeled("synthetic_train", TRAIN_SIZE, TRAIN_SEED)
}

pub fn bundled_test() -> Dataset {
    generate_labeled("synthetic_test", TEST_SIZE, TEST_SEED)
}

pub fn bundled_unlabeled() -> Vec<UnlabeledDoc> {
    generate_unlabeled("synthetic_unlabeled", UNLABELED_SIZE, UNLABELED_SEED)
}
