//! Variant generation: one rule at one site, one rule saturated across
//! increasing positions, and breadth-first composition across rules.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{valid_sites, Site};
use crate::parser::{parse_text, rewrite, Ast, Edit, ParseError, SourceUnit};
use crate::transforms::{apply, describe_site, TransformRule};

pub const DEFAULT_BUDGET: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Single,
    MultiLocation,
    MultiRule,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Single, Mode::MultiLocation, Mode::MultiRule];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Single => "single",
            Mode::MultiLocation => "multi-location",
            Mode::MultiRule => "multi-rule",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| format!("unknown mode `{s}`"))
    }
}

/// One rule application: the rule, the site's ordinal in the text it was
/// applied to, and a short excerpt of the site.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Application {
    pub rule: TransformRule,
    pub ordinal: usize,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant {
    pub text: String,
    pub parent_id: i64,
    pub provenance: Vec<Application>,
    pub mode: Mode,
}

impl Variant {
    pub fn depth(&self) -> usize {
        self.provenance.len()
    }

    pub fn rules(&self) -> Vec<TransformRule> {
        self.provenance.iter().map(|a| a.rule).collect()
    }

    /// The single rule behind this variant, if only one rule was used.
    pub fn sole_rule(&self) -> Option<TransformRule> {
        let first = self.provenance.first()?.rule;
        self.provenance.iter().all(|a| a.rule == first).then_some(first)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub rules: Vec<TransformRule>,
    pub max_depth: usize,
    pub modes: Vec<Mode>,
    pub budget: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            rules: TransformRule::ALL.to_vec(),
            max_depth: 2,
            modes: Mode::ALL.to_vec(),
            budget: DEFAULT_BUDGET,
        }
    }
}

impl GenerationConfig {
    fn enabled(&self) -> impl Iterator<Item = TransformRule> + '_ {
        TransformRule::ALL.into_iter().filter(|r| self.rules.contains(r))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ComposeError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("more than {limit} variants for one sample")]
    BudgetExceeded { limit: usize },
    #[error("provenance step {step} does not match a valid site")]
    ReplayMismatch { step: usize },
}

/// Applies `edits` and keeps the result only if it differs from `text` and
/// parses again.
fn checked_rewrite(text: &str, edits: &[Edit]) -> Option<String> {
    let out = match rewrite(text, edits) {
        Ok(out) => out,
        Err(e) => {
            log::warn!("discarding edit list: {e}");
            return None;
        }
    };
    if out == text {
        return None;
    }
    if let Err(e) = parse_text(&out) {
        log::warn!("discarding variant that no longer parses: {e}");
        return None;
    }
    Some(out)
}

fn apply_site(ast: &Ast, site: &Site) -> Option<(String, Application)> {
    let edits = apply(ast, site).ok()?;
    let text = checked_rewrite(&ast.source, &edits)?;
    let app = Application { rule: site.rule, ordinal: site.ordinal, description: describe_site(ast, site) };
    Some((text, app))
}

/// Every one-step rewrite of `ast` under `rules`, in rule order then ordinal.
fn one_step(ast: &Ast, rules: impl Iterator<Item = TransformRule>) -> Vec<(String, Application)> {
    rules
        .flat_map(|rule| valid_sites(ast, rule))
        .filter_map(|site| apply_site(ast, &site))
        .collect()
}

pub fn generate_single(unit: &SourceUnit, config: &GenerationConfig) -> Result<Vec<Variant>, ComposeError> {
    let ast = parse_text(&unit.text)?;
    Ok(one_step(&ast, config.enabled())
        .into_iter()
        .map(|(text, app)| Variant { text, parent_id: unit.id, provenance: vec![app], mode: Mode::Single })
        .collect())
}

/// Repeatedly rewrites `text`, each time at the first site (in `locate`
/// order) whose ordinal lies strictly after the previous site's position
/// carried through the rewrite. `apply_at` returns the edits and a
/// description for a site ordinal, or `None` to skip it. Stops at
/// saturation or after `max_steps` applications.
pub fn saturate<L, A>(
    text: &str,
    locate: L,
    apply_at: A,
    max_steps: usize,
) -> Result<(String, Vec<(usize, String)>), ComposeError>
where
    L: Fn(&Ast) -> Vec<usize>,
    A: Fn(&Ast, usize) -> Option<(Vec<Edit>, String)>,
{
    let mut current = text.to_string();
    let mut frontier: Option<usize> = None;
    let mut steps = Vec::new();
    loop {
        let ast = parse_text(&current)?;
        let mut applied = None;
        for ordinal in locate(&ast) {
            if frontier.is_some_and(|f| ordinal <= f) {
                continue;
            }
            let Some((edits, description)) = apply_at(&ast, ordinal) else { continue };
            let Some(next) = checked_rewrite(&current, &edits) else { continue };
            applied = Some((ordinal, edits, description, next));
            break;
        }
        let Some((ordinal, edits, description, next)) = applied else { break };
        if steps.len() == max_steps {
            return Err(ComposeError::BudgetExceeded { limit: max_steps });
        }
        frontier = Some(carry_position(ordinal, &edits));
        steps.push((ordinal, description));
        current = next;
    }
    Ok((current, steps))
}

/// New position of the byte at `pos`: insertions at `pos` land before it,
/// a replacement starting at `pos` maps to its start.
fn carry_position(pos: usize, edits: &[Edit]) -> usize {
    let mut shift: isize = 0;
    for e in edits {
        let before = e.span.end <= pos && (e.span.start < pos || e.span.is_empty());
        if before {
            shift += e.delta();
        } else if e.span.start < pos && pos < e.span.end {
            shift += e.span.start as isize - pos as isize;
        }
    }
    (pos as isize + shift) as usize
}

fn rule_site_at(ast: &Ast, rule: TransformRule, ordinal: usize) -> Option<Site> {
    valid_sites(ast, rule).into_iter().find(|s| s.ordinal == ordinal)
}

/// The rule saturated over increasing positions; `None` unless at least two
/// applications happened.
pub fn generate_multi_location(unit: &SourceUnit, rule: TransformRule) -> Result<Option<Variant>, ComposeError> {
    generate_multi_location_capped(unit, rule, DEFAULT_BUDGET)
}

fn generate_multi_location_capped(
    unit: &SourceUnit,
    rule: TransformRule,
    cap: usize,
) -> Result<Option<Variant>, ComposeError> {
    let (text, steps) = saturate(
        &unit.text,
        |ast| valid_sites(ast, rule).iter().map(|s| s.ordinal).collect(),
        |ast, ordinal| {
            let site = rule_site_at(ast, rule, ordinal)?;
            Some((apply(ast, &site).ok()?, describe_site(ast, &site)))
        },
        cap,
    )?;
    if steps.len() < 2 || text == unit.text {
        return Ok(None);
    }
    let provenance = steps
        .into_iter()
        .map(|(ordinal, description)| Application { rule, ordinal, description })
        .collect();
    Ok(Some(Variant { text, parent_id: unit.id, provenance, mode: Mode::MultiLocation }))
}

/// Breadth-first composition; returns the variants of depth 2 through
/// `config.max_depth`, deduplicated against every text already produced
/// (the original and depth-1 texts included).
pub fn generate_multi_rule(unit: &SourceUnit, config: &GenerationConfig) -> Result<Vec<Variant>, ComposeError> {
    let ast = parse_text(&unit.text)?;
    let mut seen: HashSet<String> = HashSet::from([unit.text.clone()]);
    let mut produced = 0usize;
    let mut level: Vec<Variant> = Vec::new();
    for (text, app) in one_step(&ast, config.enabled()) {
        if seen.insert(text.clone()) {
            level.push(Variant { text, parent_id: unit.id, provenance: vec![app], mode: Mode::MultiRule });
        }
    }
    produced += level.len();
    let mut out = Vec::new();
    for _ in 2..=config.max_depth {
        let mut next = Vec::new();
        for parent in &level {
            let Ok(ast) = parse_text(&parent.text) else { continue };
            for (text, app) in one_step(&ast, config.enabled()) {
                if !seen.insert(text.clone()) {
                    continue;
                }
                produced += 1;
                if produced > config.budget {
                    return Err(ComposeError::BudgetExceeded { limit: config.budget });
                }
                let mut provenance = parent.provenance.clone();
                provenance.push(app);
                next.push(Variant { text, parent_id: unit.id, provenance, mode: Mode::MultiRule });
            }
        }
        out.extend(next.iter().cloned());
        level = next;
    }
    Ok(out)
}

/// Union of the configured modes, deduplicated by text (first kept).
pub fn generate_all(unit: &SourceUnit, config: &GenerationConfig) -> Result<Vec<Variant>, ComposeError> {
    let mut all = Vec::new();
    if config.modes.contains(&Mode::Single) {
        all.extend(generate_single(unit, config)?);
    }
    if config.modes.contains(&Mode::MultiLocation) {
        for rule in config.enabled() {
            all.extend(generate_multi_location_capped(unit, rule, config.budget)?);
        }
    }
    if config.modes.contains(&Mode::MultiRule) && config.max_depth >= 2 {
        all.extend(generate_multi_rule(unit, config)?);
    }
    let mut seen = HashSet::new();
    all.retain(|v| seen.insert(v.text.clone()));
    Ok(all)
}

/// Re-applies a provenance chain to `text`.
pub fn replay(text: &str, provenance: &[Application]) -> Result<String, ComposeError> {
    let mut current = text.to_string();
    for (step, app) in provenance.iter().enumerate() {
        let ast = parse_text(&current)?;
        let site = rule_site_at(&ast, app.rule, app.ordinal).ok_or(ComposeError::ReplayMismatch { step })?;
        let edits = apply(&ast, &site).map_err(|_| ComposeError::ReplayMismatch { step })?;
        current = rewrite(&current, &edits).map_err(|_| ComposeError::ReplayMismatch { step })?;
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::Label;

    fn unit(text: &str) -> SourceUnit {
        SourceUnit::new(7, text, Label::Vulnerable)
    }

    fn only(rules: &[TransformRule]) -> GenerationConfig {
        GenerationConfig { rules: rules.to_vec(), ..Default::default() }
    }

    const THREE_SITES: &str = "int f(int err, int x, int ady) {\n  if (err >= 0) return 1;\n  if (x <= 0) return 2;\n  if (err + ady >= 0) return 3;\n  return 0;\n}";

    #[test]
    fn single_is_one_variant_per_site() {
        let v = generate_single(&unit(THREE_SITES), &only(&[TransformRule::CondReorder])).unwrap();
        assert_eq!(v.len(), 3);
        assert!(v.iter().all(|v| v.depth() == 1 && v.parent_id == 7));
        assert!(v[0].text.contains("0 <= err)"));
        assert!(v[1].text.contains("0 >= x"));
    }

    #[test]
    fn multi_location_saturates() {
        let v = generate_multi_location(&unit(THREE_SITES), TransformRule::CondReorder).unwrap().unwrap();
        assert_eq!(v.depth(), 3);
        for want in ["0 <= err)", "0 >= x", "0 <= err + ady"] {
            assert!(v.text.contains(want), "{want}");
        }
        assert_eq!(replay(THREE_SITES, &v.provenance).unwrap(), v.text);
    }

    #[test]
    fn multi_location_needs_two_steps() {
        let one = "int f(int a) { if (a > 1) return 1; return 0; }";
        assert!(generate_multi_location(&unit(one), TransformRule::CondReorder).unwrap().is_none());
    }

    #[test]
    fn depth_two_collapses_commuting_orders() {
        let src = "int f(int a, int i) { if (a > 1) i += 2; return i; }";
        let v = generate_multi_rule(&unit(src), &only(&[TransformRule::CondReorder, TransformRule::CompoundAssignSplit])).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].text, "int f(int a, int i) { if (1 < a) i = i + 2; return i; }");
    }

    #[test]
    fn for_while_round_trip_is_a_new_text() {
        let src = "int f(int n) {\n  int s = 0, i;\n  for (i = 0; i < n; i++) {\n    s += i;\n  }\n  return s;\n}";
        let v = generate_multi_rule(&unit(src), &only(&[TransformRule::ForToWhile, TransformRule::WhileToFor])).unwrap();
        let round = v
            .iter()
            .find(|v| v.rules() == [TransformRule::ForToWhile, TransformRule::WhileToFor])
            .expect("round trip variant");
        assert_ne!(round.text, src);
        assert!(round.text.contains("for (; i < n; i++)"));
    }

    #[test]
    fn budget_is_enforced() {
        let cfg = GenerationConfig { budget: 1, ..Default::default() };
        let r = generate_multi_rule(&unit(THREE_SITES), &cfg);
        assert_eq!(r, Err(ComposeError::BudgetExceeded { limit: 1 }));
    }

    #[test]
    fn all_modes_union_without_duplicates() {
        let u = unit(THREE_SITES);
        let cfg = GenerationConfig::default();
        let all = generate_all(&u, &cfg).unwrap();
        let single = generate_single(&u, &cfg).unwrap();
        for s in &single {
            assert!(all.iter().any(|a| a.text == s.text));
        }
        let texts: HashSet<_> = all.iter().map(|v| &v.text).collect();
        assert_eq!(texts.len(), all.len());
        let empty = GenerationConfig { rules: vec![], ..Default::default() };
        assert!(generate_all(&u, &empty).unwrap().is_empty());
    }

    #[test]
    fn carried_position_skips_inserted_prefix() {
        let edits = [Edit::insert(4, "xx"), Edit::replace(crate::parser::Span::new(8, 9), "")];
        assert_eq!(carry_position(4, &edits), 6);
        assert_eq!(carry_position(9, &edits), 10);
    }
}
