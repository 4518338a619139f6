//! Priority-ordered name-pattern rules assigning every operation to exactly
//! one category of a taxonomy.
//!
//! Rule files are TOML:
//!
//! ```toml
//! [taxonomy]
//! name = "ml8"
//! categories = ["DenseMM", "ElementWise"]
//!
//! [[rule]]
//! pattern = "(aten::)?(mm|addmm)"
//! category = "DenseMM"
//! priority = 100
//! device = "gpu"          # optional
//! shapes = "has_shapes"   # optional: any | has_shapes | no_shapes
//! ops_per_element = 1     # optional, used by intensity estimates
//! ```
//!
//! Patterns match the whole operation name, case-insensitively. Write your
//! own `.*` where a substring match is wanted. Higher priority wins; among
//! equal priorities the rule earlier in the file wins. Unmatched names fall
//! into the implicit `Other` category.

use crate::calltree::OpRecord;
use crate::exec::{self, Execution};
use crate::trace::Device;
use indexmap::IndexMap;
use regex::{Regex, RegexSet};
use serde::Deserialize;
use std::fmt;
use std::sync::Arc;

pub const OTHER: &str = "Other";

/// Category names of the built-in eight-category ML taxonomy, in report
/// column order (`Other` last).
pub mod ml8 {
    pub const NAME: &str = "ml8";
    pub const DENSE_MM: &str = "DenseMM";
    pub const SPARSE_MM: &str = "SparseMM";
    pub const CONVOLUTION: &str = "Convolution";
    pub const ELEMENT_WISE: &str = "ElementWise";
    pub const REGIONAL: &str = "Regional";
    pub const EMBEDDING: &str = "Embedding";
    pub const DATA_MOVEMENT: &str = "DataMovement";
    pub const DATA_TRANSFORMATION: &str = "DataTransformation";
    pub const CATEGORIES: [&str; 9] = [
        DENSE_MM,
        SPARSE_MM,
        CONVOLUTION,
        ELEMENT_WISE,
        REGIONAL,
        EMBEDDING,
        DATA_MOVEMENT,
        DATA_TRANSFORMATION,
        super::OTHER,
    ];
}

/// Category names of the built-in symbolic-executor taxonomy.
pub mod symbolic {
    pub const NAME: &str = "symbolic";
    pub const QUERY: &str = "Query";
    pub const SCALAR_ARITHMETIC: &str = "ScalarArithmetic";
    pub const JSON_PARSING: &str = "JsonParsing";
    pub const CATEGORIES: [&str; 4] = [QUERY, SCALAR_ARITHMETIC, JSON_PARSING, super::OTHER];
}

const ML8_RULES: &str = include_str!("../rules/ml8.rules");
const SYMBOLIC_RULES: &str = include_str!("../rules/symbolic.rules");

/// Source text of a shipped rule file.
pub fn builtin_source(name: &str) -> Option<&'static str> {
    match name {
        ml8::NAME => Some(ML8_RULES),
        symbolic::NAME => Some(SYMBOLIC_RULES),
        _ => None,
    }
}

/// Load a shipped rule set by name (`ml8` or `symbolic`).
pub fn builtin(name: &str) -> Option<RuleSet> {
    builtin_source(name).map(|src| load_rules(src.as_bytes()).expect("built-in rule files are valid"))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CategoryId {
    pub taxonomy: Arc<str>,
    pub category: Arc<str>,
}

impl CategoryId {
    pub fn new(taxonomy: &str, category: &str) -> Self {
        CategoryId { taxonomy: taxonomy.into(), category: category.into() }
    }

    pub fn is_other(&self) -> bool {
        &*self.category == OTHER
    }
}

impl fmt::Display for CategoryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.taxonomy, self.category)
    }
}

/// A taxonomy's name and ordered category list (including `Other`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    pub name: String,
    pub categories: Vec<String>,
}

impl Taxonomy {
    pub fn new<S: Into<String>>(name: &str, categories: impl IntoIterator<Item = S>) -> Self {
        let mut categories: Vec<String> = categories.into_iter().map(Into::into).collect();
        if !categories.iter().any(|c| c == OTHER) {
            categories.push(OTHER.to_string());
        }
        Taxonomy { name: name.to_string(), categories }
    }

    pub fn ml8() -> Self {
        Taxonomy::new(ml8::NAME, ml8::CATEGORIES)
    }

    pub fn symbolic() -> Self {
        Taxonomy::new(symbolic::NAME, symbolic::CATEGORIES)
    }

    pub fn index_of(&self, category: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == category)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapePredicate {
    #[default]
    Any,
    HasShapes,
    NoShapes,
}

impl ShapePredicate {
    fn accepts(self, has_shapes: bool) -> bool {
        match self {
            ShapePredicate::Any => true,
            ShapePredicate::HasShapes => has_shapes,
            ShapePredicate::NoShapes => !has_shapes,
        }
    }
}

/// A rule as written in a rule file.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleSpec {
    pub pattern: String,
    pub category: String,
    #[serde(default)]
    pub priority: i64,
    #[serde(default)]
    pub device: Option<Device>,
    #[serde(default)]
    pub shapes: ShapePredicate,
    #[serde(default)]
    pub ops_per_element: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct Rule {
    pub pattern: String,
    pub category: CategoryId,
    pub priority: i64,
    pub device_filter: Option<Device>,
    pub shape_predicate: ShapePredicate,
    pub ops_per_element: Option<u64>,
    /// Index in the source file; breaks priority ties.
    pub position: usize,
    regex: Regex,
}

impl Rule {
    pub fn matches(&self, name: &str, device: Device, has_shapes: bool) -> bool {
        self.filters_pass(device, has_shapes) && self.regex.is_match(name)
    }

    fn filters_pass(&self, device: Device, has_shapes: bool) -> bool {
        self.device_filter.is_none_or(|d| d == device) && self.shape_predicate.accepts(has_shapes)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RuleError {
    #[error("rule file: {0}")]
    Parse(String),
    #[error("rule {rule}: pattern {pattern:?} does not compile: {message}")]
    BadPattern { rule: usize, pattern: String, message: String },
    #[error("rule {rule}: category {category:?} is not declared by taxonomy {taxonomy:?}")]
    UndeclaredCategory { rule: usize, category: String, taxonomy: String },
    #[error("category {0:?} is declared twice")]
    DuplicateCategory(String),
    #[error("unknown built-in rule set {0:?} (expected builtin:ml8 or builtin:symbolic)")]
    UnknownBuiltin(String),
}

/// A validated, immutable taxonomy plus its rules sorted by
/// (priority descending, file order).
#[derive(Debug, Clone)]
pub struct RuleSet {
    pub taxonomy_name: String,
    /// Declared categories; `Other` is appended when not declared.
    pub categories: Vec<String>,
    pub rules: Vec<Rule>,
    specs: Vec<RuleSpec>,
    set: RegexSet,
    other: CategoryId,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleFile {
    taxonomy: TaxonomyHeader,
    #[serde(default)]
    rule: Vec<RuleSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TaxonomyHeader {
    name: String,
    categories: Vec<String>,
}

/// Parse and validate a rule file.
pub fn load_rules(input: &[u8]) -> Result<RuleSet, RuleError> {
    let text = std::str::from_utf8(input).map_err(|e| RuleError::Parse(e.to_string()))?;
    let file: RuleFile = toml::from_str(text).map_err(|e| RuleError::Parse(e.to_string()))?;
    RuleSet::from_parts(&file.taxonomy.name, file.taxonomy.categories, file.rule)
}

/// Resolve `builtin:<name>` or read a rule file from disk.
pub fn resolve_rules(source: &str) -> Result<RuleSet, RuleError> {
    if let Some(name) = source.strip_prefix("builtin:") {
        return builtin(name).ok_or_else(|| RuleError::UnknownBuiltin(name.to_string()));
    }
    let bytes = std::fs::read(source).map_err(|e| RuleError::Parse(format!("{source}: {e}")))?;
    load_rules(&bytes)
}

impl RuleSet {
    pub fn from_parts(taxonomy: &str, declared: Vec<String>, specs: Vec<RuleSpec>) -> Result<RuleSet, RuleError> {
        if taxonomy.trim().is_empty() {
            return Err(RuleError::Parse("taxonomy name is empty".into()));
        }
        let mut categories: Vec<String> = Vec::with_capacity(declared.len() + 1);
        for c in declared {
            if categories.contains(&c) {
                return Err(RuleError::DuplicateCategory(c));
            }
            categories.push(c);
        }
        if !categories.iter().any(|c| c == OTHER) {
            categories.push(OTHER.to_string());
        }
        let ids: IndexMap<&str, CategoryId> =
            categories.iter().map(|c| (c.as_str(), CategoryId::new(taxonomy, c))).collect();

        let mut rules = Vec::with_capacity(specs.len());
        for (position, spec) in specs.iter().enumerate() {
            let category = ids.get(spec.category.as_str()).cloned().ok_or_else(|| RuleError::UndeclaredCategory {
                rule: position,
                category: spec.category.clone(),
                taxonomy: taxonomy.to_string(),
            })?;
            let regex = Regex::new(&anchored(&spec.pattern)).map_err(|e| RuleError::BadPattern {
                rule: position,
                pattern: spec.pattern.clone(),
                message: e.to_string(),
            })?;
            rules.push(Rule {
                pattern: spec.pattern.clone(),
                category,
                priority: spec.priority,
                device_filter: spec.device,
                shape_predicate: spec.shapes,
                ops_per_element: spec.ops_per_element,
                position,
                regex,
            });
        }
        rules.sort_by_key(|r| (std::cmp::Reverse(r.priority), r.position));
        let set = RegexSet::new(rules.iter().map(|r| anchored(&r.pattern))).map_err(|e| RuleError::BadPattern {
            rule: 0,
            pattern: String::new(),
            message: e.to_string(),
        })?;
        let other = ids[OTHER].clone();
        Ok(RuleSet { taxonomy_name: taxonomy.to_string(), categories, rules, specs, set, other })
    }

    /// A copy with one more rule appended to the file.
    pub fn with_rule(&self, spec: RuleSpec) -> Result<RuleSet, RuleError> {
        let mut specs = self.specs.clone();
        specs.push(spec);
        let declared = self.categories.clone();
        RuleSet::from_parts(&self.taxonomy_name, declared, specs)
    }

    pub fn taxonomy(&self) -> Taxonomy {
        Taxonomy { name: self.taxonomy_name.clone(), categories: self.categories.clone() }
    }

    pub fn category_id(&self, name: &str) -> Option<CategoryId> {
        self.categories.iter().any(|c| c == name).then(|| CategoryId::new(&self.taxonomy_name, name))
    }

    pub fn other(&self) -> &CategoryId {
        &self.other
    }

    /// The winning rule for an operation, if any.
    pub fn matching_rule(&self, name: &str, device: Device, has_shapes: bool) -> Option<&Rule> {
        let hits = self.set.matches(name);
        // Rules are stored in priority order, so the first passing hit wins.
        hits.iter().map(|i| &self.rules[i]).find(|r| r.filters_pass(device, has_shapes))
    }

    pub fn classify_name(&self, name: &str, device: Device, has_shapes: bool) -> CategoryId {
        self.matching_rule(name, device, has_shapes)
            .map(|r| r.category.clone())
            .unwrap_or_else(|| self.other.clone())
    }

    /// The category of `record`. Total and deterministic.
    pub fn classify(&self, record: &OpRecord) -> CategoryId {
        self.classify_name(&record.name, record.device, record.shapes.is_some())
    }
}

fn anchored(pattern: &str) -> String {
    format!("(?i)^(?:{pattern})$")
}

/// Distinct names no rule matched, by descending total self time.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct UnmatchedReport {
    pub entries: Vec<UnmatchedName>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnmatchedName {
    pub name: String,
    pub self_ns: i64,
    pub records: usize,
}

impl UnmatchedReport {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }
}

/// Classify every record. Each distinct (name, device, has-shapes) key is
/// classified once; with [`Execution::Parallel`] keys are classified
/// concurrently. The result does not depend on the execution mode.
pub fn classify_all(mut records: Vec<OpRecord>, rules: &RuleSet, exec: Execution) -> (Vec<OpRecord>, UnmatchedReport) {
    let mut keys: IndexMap<(&str, Device, bool), ()> = IndexMap::new();
    let slots: Vec<usize> = records
        .iter()
        .map(|r| keys.insert_full((r.name.as_str(), r.device, r.shapes.is_some()), ()).0)
        .collect();
    let key_list: Vec<(&str, Device, bool)> = keys.into_keys().collect();
    let categories = exec::map(exec, &key_list, |&(name, device, shapes)| {
        rules.matching_rule(name, device, shapes).map(|r| r.category.clone())
    });

    let mut unmatched: IndexMap<String, (i64, usize)> = IndexMap::new();
    for (record, slot) in records.iter_mut().zip(&slots) {
        match &categories[*slot] {
            Some(c) => record.category = Some(c.clone()),
            None => {
                record.category = Some(rules.other.clone());
                let entry = unmatched.entry(record.name.clone()).or_default();
                entry.0 += record.self_ns;
                entry.1 += 1;
            }
        }
    }
    let mut entries: Vec<UnmatchedName> =
        unmatched.into_iter().map(|(name, (self_ns, records))| UnmatchedName { name, self_ns, records }).collect();
    entries.sort_by(|a, b| b.self_ns.cmp(&a.self_ns).then_with(|| a.name.cmp(&b.name)));
    (records, UnmatchedReport { entries })
}
