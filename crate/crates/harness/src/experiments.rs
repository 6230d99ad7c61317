//! Experiment drivers: composition stability, upgrade safety, long-horizon
//! chains and the dimension ablation.

use std::collections::BTreeMap;

use ecm_core::checker::{check_upgrade, contract_delta, CheckConfig, Dimension, Outcome, Severity};
use ecm_core::profiles::FrameTransformRegistry;
use ecm_core::release::semver_only_classify;
use ecm_core::{classify_release, CompatibilityClass, EcmContract};
use serde::Serialize;
use serde_yaml::Value;

use crate::fixtures::{manifest_from_value, FixtureError, Fixtures, LongChain};
use crate::generate::{generate_chains, ChainSpec, GenerateError, POPULATION};
use crate::sim::{contract_check, schema_issues, simulate_execution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Naive,
    SchemaOnly,
    Contract,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Naive, Method::SchemaOnly, Method::Contract];

    pub fn label(self) -> &'static str {
        match self {
            Method::Naive => "Ad hoc",
            Method::SchemaOnly => "Schema",
            Method::Contract => "Contract",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub method: Method,
    pub accepted: usize,
    pub post_accept_failures: usize,
    /// Share of the whole population that does not end in a runtime failure.
    pub success_rate: f64,
    pub false_accepts: Option<usize>,
    pub false_rejects: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LengthRow {
    pub length: usize,
    pub count: usize,
    pub valid: usize,
    pub invalid: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Exp1Report {
    pub seed: u64,
    pub chains: usize,
    pub by_length: Vec<LengthRow>,
    pub results: Vec<ExperimentResult>,
}

impl Exp1Report {
    pub fn result(&self, m: Method) -> &ExperimentResult {
        self.results.iter().find(|r| r.method == m).expect("every method is reported")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error(transparent)]
    Fixture(#[from] FixtureError),
    #[error("chain {0} references a module missing from the library")]
    MissingModule(String),
}

/// A generated population with what every method needs, computed once.
#[derive(Debug, Clone)]
pub struct Population {
    pub seed: u64,
    pub chains: Vec<ChainSpec>,
    pub contracts: Vec<Vec<EcmContract>>,
    pub valid: Vec<bool>,
    pub schema_ok: Vec<bool>,
}

impl Population {
    pub fn generate(fx: &Fixtures, seed: u64, n: usize) -> Result<Self, ExperimentError> {
        let chains = generate_chains(&fx.templates, &fx.library, n, seed)?;
        let mut contracts = Vec::with_capacity(chains.len());
        let mut valid = Vec::with_capacity(chains.len());
        let mut schema_ok = Vec::with_capacity(chains.len());
        for c in &chains {
            let resolved = c.resolve(&fx.library).ok_or_else(|| ExperimentError::MissingModule(c.seed_tag.clone()))?;
            let budget = fx.template(&c.template_id).and_then(|t| t.latency_budget_ms);
            valid.push(simulate_execution(c, &fx.oracle, &fx.library, budget).is_success());
            schema_ok.push(schema_issues(&resolved) == 0);
            contracts.push(resolved);
        }
        Ok(Self { seed, chains, contracts, valid, schema_ok })
    }

    pub fn len(&self) -> usize {
        self.chains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chains.is_empty()
    }

    /// Contract verdicts under `cfg`. The checker is not told the template
    /// latency budgets.
    pub fn contract_accepts(&self, fx: &Fixtures, cfg: &CheckConfig) -> Vec<bool> {
        let p = fx.bench_profile();
        self.contracts.iter().map(|c| contract_check(c, &p.embodiment, &p.policy, cfg).outcome.is_accepted()).collect()
    }

    pub fn failures(&self) -> usize {
        self.valid.iter().filter(|v| !**v).count()
    }

    fn result(&self, method: Method, accepted: Option<&[bool]>) -> ExperimentResult {
        let n = self.len();
        let (acc, fa, fr) = match accepted {
            None => (n, None, None),
            Some(a) => {
                let acc = a.iter().filter(|x| **x).count();
                let fa = a.iter().zip(&self.valid).filter(|(a, v)| **a && !**v).count();
                let fr = a.iter().zip(&self.valid).filter(|(a, v)| !**a && **v).count();
                (acc, Some(fa), Some(fr))
            }
        };
        let failures = fa.unwrap_or_else(|| self.failures());
        ExperimentResult {
            method,
            accepted: acc,
            post_accept_failures: failures,
            success_rate: rate(n - failures, n),
            false_accepts: fa,
            false_rejects: fr,
        }
    }
}

fn rate(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        // Rounded to one decimal so reports are stable across platforms.
        (1000.0 * part as f64 / whole as f64).round() / 10.0
    }
}

pub fn run_experiment1(fx: &Fixtures, seed: u64) -> Result<Exp1Report, ExperimentError> {
    let pop = Population::generate(fx, seed, POPULATION)?;
    Ok(experiment1_on(fx, &pop))
}

pub fn experiment1_on(fx: &Fixtures, pop: &Population) -> Exp1Report {
    let mut by_length: BTreeMap<usize, LengthRow> = BTreeMap::new();
    for (c, v) in pop.chains.iter().zip(&pop.valid) {
        let row = by_length.entry(c.len()).or_insert(LengthRow { length: c.len(), count: 0, valid: 0, invalid: 0 });
        row.count += 1;
        if *v {
            row.valid += 1;
        } else {
            row.invalid += 1;
        }
    }
    let contract = pop.contract_accepts(fx, &CheckConfig::default());
    Exp1Report {
        seed: pop.seed,
        chains: pop.len(),
        by_length: by_length.into_values().collect(),
        results: vec![
            pop.result(Method::Naive, None),
            pop.result(Method::SchemaOnly, Some(&pop.schema_ok)),
            pop.result(Method::Contract, Some(&contract)),
        ],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub configuration: String,
    pub removed: Option<Dimension>,
    pub success_rate: f64,
    pub failure_reduction: f64,
    pub unsafe_acceptances: usize,
}

pub fn run_ablation(fx: &Fixtures, seed: u64, remove: Option<Dimension>) -> Result<AblationRow, ExperimentError> {
    let pop = Population::generate(fx, seed, POPULATION)?;
    Ok(ablation_on(fx, &pop, remove))
}

pub fn ablation_on(fx: &Fixtures, pop: &Population, remove: Option<Dimension>) -> AblationRow {
    let cfg = remove.map_or_else(CheckConfig::default, CheckConfig::without);
    let accepted = pop.contract_accepts(fx, &cfg);
    let unsafe_acceptances = accepted.iter().zip(&pop.valid).filter(|(a, v)| **a && !**v).count();
    let naive = pop.failures();
    AblationRow {
        configuration: remove.map_or("Full contract".to_string(), |d| format!("- {}", d.long_name())),
        removed: remove,
        success_rate: rate(pop.len() - unsafe_acceptances, pop.len()),
        failure_reduction: rate(naive.saturating_sub(unsafe_acceptances), naive),
        unsafe_acceptances,
    }
}

/// The full configuration followed by each contract dimension removed in turn.
pub fn run_ablation_all(fx: &Fixtures, seed: u64) -> Result<Vec<AblationRow>, ExperimentError> {
    let pop = Population::generate(fx, seed, POPULATION)?;
    Ok(std::iter::once(None)
        .chain(Dimension::CONTRACT.into_iter().map(Some))
        .map(|d| ablation_on(fx, &pop, d))
        .collect())
}

// ---- upgrades ----

/// How an upgrade is let into a deployment, from least to most guarded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Automatic,
    WithConditions,
    Review,
    Blocked,
}

impl Route {
    pub fn from_outcome(o: Outcome) -> Self {
        match o {
            Outcome::Accept => Route::Automatic,
            Outcome::AcceptWithConditions => Route::WithConditions,
            Outcome::RequireMigrationOrReview => Route::Review,
            Outcome::Reject => Route::Blocked,
        }
    }

    /// The least guarded route an upgrade of this true class may take
    /// without having to be rolled back.
    pub fn required_for(class: CompatibilityClass) -> Self {
        match class {
            CompatibilityClass::FullyCompatible => Route::Automatic,
            CompatibilityClass::ResourceSensitive | CompatibilityClass::RecoverySensitive => Route::WithConditions,
            CompatibilityClass::PolicySensitive | CompatibilityClass::Breaking => Route::Review,
        }
    }

    /// Version-number-only tooling ships anything but a major bump directly.
    pub fn for_semver(predicted: CompatibilityClass) -> Self {
        if predicted == CompatibilityClass::Breaking {
            Route::Review
        } else {
            Route::Automatic
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UpgradeRow {
    pub case_id: String,
    pub module_id: String,
    pub truth: CompatibilityClass,
    pub contract: CompatibilityClass,
    pub semver: CompatibilityClass,
    pub contract_route: Route,
    pub codes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rollbacks {
    pub contract: usize,
    pub semver: usize,
    pub ad_hoc: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Exp2Report {
    pub cases: Vec<UpgradeRow>,
    pub contract_correct: usize,
    pub semver_correct: usize,
    /// Rows are the true class and columns the contract prediction, both in
    /// `CompatibilityClass::ALL` order.
    pub confusion: [[usize; 5]; 5],
    pub rollbacks: Rollbacks,
}

fn class_index(c: CompatibilityClass) -> usize {
    CompatibilityClass::ALL.iter().position(|x| *x == c).expect("ALL lists every class")
}

pub fn run_experiment2(fx: &Fixtures) -> Result<Exp2Report, ExperimentError> {
    let p = fx.bench_profile();
    let cfg = CheckConfig::default();
    let mut cases = Vec::with_capacity(fx.upgrades.len());
    let mut confusion = [[0usize; 5]; 5];
    let mut rollbacks = Rollbacks { contract: 0, semver: 0, ad_hoc: 0 };
    for case in &fx.upgrades {
        let bad = |e: String| FixtureError::Corrupt { path: case.case_id.clone(), reason: e };
        let report = check_upgrade(&case.old, &case.new, &case.dependents, &p.embodiment, &p.policy, &cfg)
            .map_err(|e| bad(e.to_string()))?;
        let semver = semver_only_classify(&case.old.version(), &case.new.version()).map_err(|e| bad(e.to_string()))?;
        let route = Route::from_outcome(report.report.outcome);
        let needed = Route::required_for(case.truth);
        rollbacks.contract += usize::from(route < needed);
        rollbacks.semver += usize::from(Route::for_semver(semver) < needed);
        rollbacks.ad_hoc += usize::from(Route::Automatic < needed);
        confusion[class_index(case.truth)][class_index(report.class)] += 1;
        cases.push(UpgradeRow {
            case_id: case.case_id.clone(),
            module_id: case.new.module_id.to_string(),
            truth: case.truth,
            contract: report.class,
            semver,
            contract_route: route,
            codes: report.report.issues().map(|f| f.code.clone()).collect(),
        });
    }
    Ok(Exp2Report {
        contract_correct: cases.iter().filter(|c| c.contract == c.truth).count(),
        semver_correct: cases.iter().filter(|c| c.semver == c.truth).count(),
        cases,
        confusion,
        rollbacks,
    })
}

/// The contract class of a single old/new pair, without deployment context.
pub fn classify_pair(old: &EcmContract, new: &EcmContract) -> Option<CompatibilityClass> {
    contract_delta(old, new).ok().map(|d| classify_release(&d))
}

// ---- long-horizon chains ----

pub const RUNS_PER_TASK: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskRow {
    pub task: String,
    pub title: String,
    pub method: Method,
    pub issues_pre_run: usize,
    pub runtime_failures: usize,
    pub manual_interventions: usize,
    pub task_successes: usize,
    pub runs: usize,
    pub codes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Exp3Report {
    pub rows: Vec<TaskRow>,
    pub contract_only_issues: usize,
    pub schema_issues: usize,
}

impl Exp3Report {
    pub fn row(&self, task: &str, m: Method) -> Option<&TaskRow> {
        self.rows.iter().find(|r| r.task == task && r.method == m)
    }
}

struct Applied {
    chain: Vec<EcmContract>,
    profile: crate::fixtures::Profile,
}

/// Applies the named mitigations to the task's modules and profile.
fn apply_mitigations(fx: &Fixtures, lc: &LongChain, names: &[&str]) -> Result<Applied, String> {
    let mut profile = fx.profiles[&lc.profile].clone();
    let mut modules: Vec<Value> = lc.modules.clone();
    for m in lc.mitigations.iter().filter(|m| names.contains(&m.name.as_str())) {
        if let Some(edge) = &m.register_transform {
            let (a, b) = FrameTransformRegistry::parse_edge(edge).ok_or_else(|| format!("bad transform `{edge}`"))?;
            profile.embodiment.frame_transforms.register(a, b);
        }
        for (key, v) in &m.grant {
            let bound =
                ecm_core::manifest::perm_bound(v, &format!("{}.grant.{key}", m.name)).map_err(|e| e.to_string())?;
            profile.policy.granted.insert(key.clone(), bound);
        }
        for p in &m.patch {
            let module = modules.get_mut(p.module).ok_or_else(|| format!("{}: no module {}", m.name, p.module))?;
            set_path(module, &p.path, p.value.clone())?;
        }
    }
    let chain = modules.iter().map(manifest_from_value).collect::<Result<_, _>>()?;
    Ok(Applied { chain, profile })
}

fn set_path(doc: &mut Value, path: &str, value: Value) -> Result<(), String> {
    let mut cur = doc;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let map = cur.as_mapping_mut().ok_or_else(|| format!("`{path}` does not name a mapping"))?;
        let key = Value::String(part.to_string());
        if i + 1 == parts.len() {
            map.insert(key, value);
            return Ok(());
        }
        cur = map.entry(key).or_insert_with(|| Value::Mapping(Default::default()));
    }
    Ok(())
}

pub fn run_experiment3(fx: &Fixtures) -> Result<Exp3Report, ExperimentError> {
    let mut rows = Vec::new();
    let (mut contract_total, mut schema_total) = (0, 0);
    for lc in &fx.long_chains {
        let bad = |e: String| FixtureError::Corrupt { path: format!("longhorizon/{}.chain.yaml", lc.task), reason: e };
        let base = apply_mitigations(fx, lc, &[]).map_err(bad)?;
        let cfg = CheckConfig::default();
        let report = contract_check(&base.chain, &base.profile.embodiment, &base.profile.policy, &cfg);
        let contract_codes: Vec<String> = report.issues().map(|f| f.code.clone()).collect();
        let schema_codes: Vec<String> = base
            .chain
            .windows(2)
            .flat_map(|w| ecm_core::checker::compose::signature_findings(&w[0], &w[1], None))
            .map(|f| f.code)
            .collect();
        contract_total += contract_codes.len();
        schema_total += schema_codes.len();
        for method in Method::ALL {
            let detected: &[String] = match method {
                Method::Naive => &[],
                Method::SchemaOnly => &schema_codes,
                Method::Contract => &contract_codes,
            };
            // A fault is resolved before the run iff the method saw one of its
            // codes; resolving it applies the fault's mitigation.
            let resolved: Vec<&str> = lc
                .faults
                .iter()
                .filter(|f| f.codes.iter().any(|c| detected.contains(c)))
                .map(|f| f.mitigated_by.as_str())
                .collect();
            let open = lc.faults.iter().filter(|f| !resolved.contains(&f.mitigated_by.as_str())).count();
            let mut fails = open > 0;
            if !fails && method == Method::Contract {
                let after = apply_mitigations(fx, lc, &resolved).map_err(bad)?;
                let recheck = contract_check(&after.chain, &after.profile.embodiment, &after.profile.policy, &cfg);
                fails = recheck.findings.iter().any(|f| f.severity == Severity::Blocking);
            }
            let failures = if fails { RUNS_PER_TASK } else { 0 };
            rows.push(TaskRow {
                task: lc.task.clone(),
                title: lc.title.clone(),
                method,
                issues_pre_run: detected.len(),
                runtime_failures: failures,
                manual_interventions: failures,
                task_successes: RUNS_PER_TASK - failures,
                runs: RUNS_PER_TASK,
                codes: detected.to_vec(),
            });
        }
    }
    Ok(Exp3Report {
        rows,
        contract_only_issues: contract_total.saturating_sub(schema_total),
        schema_issues: schema_total,
    })
}
