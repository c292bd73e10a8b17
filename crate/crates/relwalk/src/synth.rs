//! A synthetic database with planted informative and noise walk schemes.
//!
//! `Item(id, label)` is the start relation and `label` the prediction
//! target. Two relations hang off it:
//!
//! * `Tag(tid, item, t1, t2, tconst)`
//! * `Visit(vid, item, v1, v2, v3, v4)`
//!
//! The attributes `t1, t2, v1..v4` follow the item's label with probability
//! `fidelity` and are uniform otherwise, so walks to them carry the label.
//! `id`, `tid`, `vid` and the FK columns `item` are unique per item and
//! `tconst` is constant, so those targets carry nothing. With `label`
//! stripped and walks of length at most one this gives six informative and
//! six noise targeted schemes.

use rand::Rng;
use relwalk_core::seed::rng_for;
use relwalk_core::{
    AttributeDecl, Database, DatabaseSchema, DomainKind, ForeignKey, RelId, RelationSchema,
    Result, Value,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedConfig {
    pub n_items: usize,
    pub n_labels: usize,
    pub n_categories: usize,
    /// Minimum tags and visits per item; each item draws up to twice this.
    pub min_children: usize,
    pub fidelity: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            n_items: 200,
            n_labels: 2,
            n_categories: 4,
            min_children: 4,
            fidelity: 0.85,
            seed: 0,
        }
    }
}

pub const INFORMATIVE: [&str; 6] = ["t1", "t2", "v1", "v2", "v3", "v4"];
pub const NOISE: [&str; 6] = ["id", "tid", "Tag.item", "tconst", "vid", "Visit.item"];

fn cat(s: String) -> Value {
    Value::Categorical(s)
}

pub fn planted_schema() -> DatabaseSchema {
    let c = |n: &str| AttributeDecl::new(n, DomainKind::Categorical, false);
    DatabaseSchema::new(
        vec![
            RelationSchema::new("Item", vec![c("id"), c("label")], vec!["id"]),
            RelationSchema::new(
                "Tag",
                vec![c("tid"), c("item"), c("t1"), c("t2"), c("tconst")],
                vec!["tid"],
            ),
            RelationSchema::new(
                "Visit",
                vec![c("vid"), c("item"), c("v1"), c("v2"), c("v3"), c("v4")],
                vec!["vid"],
            ),
        ],
        vec![
            ForeignKey::new("Tag", vec!["item"], "Item", vec!["id"]),
            ForeignKey::new("Visit", vec!["item"], "Item", vec!["id"]),
        ],
    )
    .expect("planted schema is valid")
}

/// Generates the planted database. Labels are balanced: item `i` has label
/// `i mod n_labels`.
pub fn planted_database(cfg: &PlantedConfig) -> Result<Database> {
    let mut rng = rng_for(cfg.seed, "planted", 0);
    let mut items = Vec::new();
    let mut tags = Vec::new();
    let mut visits = Vec::new();
    let draw = |rng: &mut relwalk_core::seed::Rng, attr: &str, label: usize| {
        let c = if rng.random_bool(cfg.fidelity) {
            label % cfg.n_categories
        } else {
            rng.random_range(0..cfg.n_categories)
        };
        cat(format!("{attr}_{c}"))
    };
    for i in 0..cfg.n_items {
        let label = i % cfg.n_labels;
        let id = format!("i{i}");
        items.push(vec![cat(id.clone()), cat(format!("L{label}"))]);
        for _ in 0..rng.random_range(cfg.min_children..=2 * cfg.min_children) {
            let tid = format!("t{}", tags.len());
            let t1 = draw(&mut rng, "t1", label);
            let t2 = draw(&mut rng, "t2", label);
            tags.push(vec![cat(tid), cat(id.clone()), t1, t2, cat("const".into())]);
        }
        for _ in 0..rng.random_range(cfg.min_children..=2 * cfg.min_children) {
            let mut row = vec![cat(format!("v{}", visits.len())), cat(id.clone())];
            for a in ["v1", "v2", "v3", "v4"] {
                row.push(draw(&mut rng, a, label));
            }
            visits.push(row);
        }
    }
    Database::from_relation_rows(planted_schema(), vec![items, tags, visits])
}

/// Start relation of the planted database.
pub const ITEM: RelId = RelId(0);
