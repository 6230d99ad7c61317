use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn lib(name: &str) -> String {
    repo().join(format!("fixtures/library/{name}.ecm.yaml")).display().to_string()
}

fn lab() -> String {
    repo().join("fixtures/profiles/lab.profile.yaml").display().to_string()
}

fn nav_text() -> String {
    fs::read_to_string(repo().join("crates/core/tests/data/navigation.ecm.yaml")).unwrap()
}

fn ecm(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ecm"))
        .args(args)
        .current_dir(cwd)
        .env_remove("ECM_REGISTRY_ROOT")
        .output()
        .unwrap()
}

fn status(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

const IDLE: &str = "ecm: {module_id: ecm.test.idle, version: 1.0.0}\nsignature: {}\nbehavior: {preconditions: [ready], postconditions: [ready]}\nresources: {}\npermissions: {}\nrecovery: {}\nversioning: {}\n";

#[test]
fn clean_chain_exits_zero() {
    let t = TempDir::new().unwrap();
    let m = write(t.path(), "idle.ecm.yaml", IDLE);
    let o = ecm(&["check", "compose", &m, &m, &m, "--emb", &lab()], t.path());
    assert_eq!(status(&o), 0, "{}", stdout(&o));
}

#[test]
fn check_outcomes_map_to_exit_statuses() {
    let t = TempDir::new().unwrap();
    let nav = write(t.path(), "nav.ecm.yaml", &nav_text());
    let o = ecm(&["check", "install", &nav, "--emb", &lab()], t.path());
    assert_eq!(status(&o), 0);

    let old_runtime = write(
        t.path(),
        "old.profile.yaml",
        &fs::read_to_string(lab()).unwrap().replace("runtime_version: 2.4.0", "runtime_version: 3.1.0"),
    );
    let o = ecm(&["check", "install", &nav, "--emb", &old_runtime], t.path());
    assert_eq!(status(&o), 30);
    assert!(stdout(&o).contains("DEP_UNSAT"));

    let up = write(t.path(), "locate.ecm.yaml", "ecm: {module_id: ecm.test.locate, version: 1.0.0}\nsignature: {output_schema: [{target_pose: Pose3D}], coordinate_frame: map}\nbehavior: {postconditions: [located]}\nresources: {}\npermissions: {}\nrecovery: {}\nversioning: {}\n");
    let down = write(t.path(), "reach.ecm.yaml", "ecm: {module_id: ecm.test.reach, version: 1.0.0}\nsignature: {input_schema: [{target_pose: Pose3D}], coordinate_frame: base_link}\nbehavior: {preconditions: [located]}\nresources: {}\npermissions: {}\nrecovery: {}\nversioning: {}\n");
    let mapped = write(
        t.path(),
        "mapped.profile.yaml",
        &fs::read_to_string(lab()).unwrap().replace("odom->map", "map->base_link"),
    );
    assert_eq!(status(&ecm(&["check", "compose", &up, &down, "--emb", &mapped], t.path())), 10);

    let world = write(t.path(), "low.world.yaml", "facts: {localization_confidence: 0.85, base_ready: true}\navailable_locks: [base_controller]\nlive_sensors: [lidar, imu]\nallocatable: {cpu_cores: 4, mem_gb: 8}\n");
    let o = ecm(&["check", "invoke", &nav, "--world", &world, "--emb", &lab()], t.path());
    assert_eq!(status(&o), 30);
    assert!(stdout(&o).contains("PRECOND_UNMET"));
}

#[test]
fn gpu_upgrade_on_gpu_less_platform_is_rejected() {
    let t = TempDir::new().unwrap();
    let grasp = |v: &str, compute: &str, retry: &str| {
        format!("ecm: {{module_id: ecm.grasp.demo, version: {v}}}\nsignature: {{input_schema: [{{object_pose: Pose3D}}], output_schema: [{{grasp_state: GraspState}}]}}\nbehavior: {{preconditions: [object_visible], postconditions: [object_held]}}\nresources: {{required_actuators: [gripper], compute: {compute}}}\npermissions: {{}}\nrecovery: {{failure_modes: [slip], retry_policy: {retry}, rollback_state: pregrasp_pose}}\nversioning: {{}}\n")
    };
    let old = write(t.path(), "old.ecm.yaml", &grasp("1.0.0", "{cpu_cores: 1}", "retry_once"));
    let new =
        write(t.path(), "new.ecm.yaml", &grasp("2.0.0", "{cpu_cores: 1, gpu_gb: 2}", "{max: 2, strategy: new_pose}"));
    let no_gpu =
        write(t.path(), "nogpu.profile.yaml", &fs::read_to_string(lab()).unwrap().replace("gpu_gb: 8", "gpu_gb: 0"));
    let o = ecm(&["check", "upgrade", &old, &new, "--emb", &no_gpu, "--output", "json"], t.path());
    assert_eq!(status(&o), 30);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let findings = v["report"]["findings"].as_array().unwrap();
    assert!(findings.iter().any(|f| f["dimension"] == "Res" && f["severity"] == "blocking"), "{findings:?}");
}

#[test]
fn disabling_recovery_hides_a_recovery_conflict() {
    let t = TempDir::new().unwrap();
    let (a, b) = (lib("ecm.grasp.basic"), lib("ecm.navigation.elevator"));
    let o = ecm(&["check", "compose", &a, &b, "--emb", &lab()], t.path());
    assert_eq!(status(&o), 30);
    assert!(stdout(&o).contains("ROLLBACK_UNREACHABLE"));
    let o = ecm(&["check", "compose", &a, &b, "--emb", &lab(), "--disable-dim", "Rec"], t.path());
    assert!(matches!(status(&o), 0 | 10), "{}", stdout(&o));
}

#[test]
fn text_and_json_report_the_same_codes() {
    let t = TempDir::new().unwrap();
    let args = [
        "check",
        "compose",
        &lib("ecm.grasp.basic"),
        &lib("ecm.interaction.handover"),
        &lib("ecm.navigation.elevator"),
    ];
    let text = ecm(&[&args[..], &["--emb", &lab()]].concat(), t.path());
    let json = ecm(&[&args[..], &["--emb", &lab(), "--output", "json"]].concat(), t.path());
    assert_eq!(status(&text), status(&json));
    let v: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    let codes: Vec<String> =
        v["findings"].as_array().unwrap().iter().map(|f| f["code"].as_str().unwrap().to_string()).collect();
    assert!(!codes.is_empty());
    let body = stdout(&text);
    let text_codes: Vec<&str> = body
        .lines()
        .filter(|l| {
            l.starts_with("  ") && !l.trim_start().starts_with("hint") && !l.trim_start().starts_with("condition")
        })
        .map(|l| l.split_whitespace().nth(2).unwrap())
        .collect();
    assert_eq!(text_codes, codes);
}

#[test]
fn usage_and_parse_errors_exit_two() {
    let t = TempDir::new().unwrap();
    let o = ecm(&["check", "install", "missing.ecm.yaml", "--emb", &lab()], t.path());
    assert_eq!(status(&o), 2);
    assert!(stderr(&o).contains("missing.ecm.yaml"));
    let bad = write(t.path(), "bad.ecm.yaml", "ecm: [unclosed");
    let o = ecm(&["check", "install", &bad, "--emb", &lab()], t.path());
    assert_eq!(status(&o), 2);
    assert!(stderr(&o).contains("bad.ecm.yaml"));
    assert_eq!(status(&ecm(&["check", "install", &lib("ecm.grasp.basic")], t.path())), 2);
    assert_eq!(status(&ecm(&["frobnicate"], t.path())), 2);
    assert_eq!(status(&ecm(&["check", "compose", &lib("ecm.grasp.basic"), "--emb", &lab()], t.path())), 2);
}

#[test]
fn release_commands() {
    let t = TempDir::new().unwrap();
    let nav = write(t.path(), "nav.ecm.yaml", &nav_text());
    let o = ecm(&["release", "classify", &nav, &nav], t.path());
    assert_eq!(status(&o), 0);
    assert!(stdout(&o).starts_with("FullyCompatible"));

    let ext = write(
        t.path(),
        "ext.ecm.yaml",
        &nav_text().replace("{final_pose: Pose3D}]", "{final_pose: Pose3D}, {path_length: Float}]"),
    );
    let o = ecm(&["release", "suggest-version", &nav, &ext], t.path());
    assert_eq!(stdout(&o).trim(), "1.4.0");

    let rel = write(
        t.path(),
        "nav.release.yaml",
        "channel: beta\nevidence: {contract_complete: true, compat_verified: verified, policy_review: reviewed, upgrade_tested: tested, rollback_ready: recommended}\n",
    );
    let o = ecm(&["release", "gate", &nav, "--release", &rel, "--to", "stable", "--pol", &lab()], t.path());
    assert_eq!(status(&o), 30);
    assert!(stdout(&o).contains("rollback gate"));
    let o = ecm(&["release", "gate", &nav, "--release", &rel, "--to", "certified", "--pol", &lab()], t.path());
    assert_eq!(status(&o), 30);

    let o = ecm(&["release", "deprecate", &nav, "--release", &rel, "--action", "remove"], t.path());
    assert_eq!(status(&o), 30);
    let o = ecm(&["release", "deprecate", &nav, "--release", &rel, "--action", "flag"], t.path());
    assert_eq!(status(&o), 0);
    assert!(fs::read_to_string(&nav).unwrap().contains("deprecation"));
}

#[test]
fn registry_workflow() {
    let t = TempDir::new().unwrap();
    let root = t.path().join("reg");
    fs::create_dir(&root).unwrap();
    let r = root.display().to_string();
    let o = ecm(&["registry", "list", "--registry-root", &r], t.path());
    assert_eq!(status(&o), 0);
    assert_eq!(stdout(&o).lines().count(), 1);

    let text = nav_text();
    for (v, ch) in [("1.2.0", "stable"), ("1.3.0", "stable"), ("2.0.0", "beta")] {
        let m =
            write(t.path(), &format!("nav-{v}.ecm.yaml"), &text.replace("version: 1.3.0", &format!("version: {v}")));
        let rel = write(
            t.path(),
            &format!("nav-{v}.release.yaml"),
            &format!("channel: {ch}\nevidence: {{contract_complete: true}}\n"),
        );
        let o = ecm(&["registry", "add", &m, "--release", &rel, "--registry-root", &r], t.path());
        assert_eq!(status(&o), 0, "{}", stderr(&o));
    }
    let dep = text
        .replace("ecm.navigation.precise", "ecm.interaction.guide")
        .replace("{runtime: \">=2.1,<3.0\"}", "{runtime: \">=2.1,<3.0\", ecm.navigation.precise: \"<2.0\"}");
    let dep = write(t.path(), "guide.ecm.yaml", &dep);
    assert_eq!(status(&ecm(&["registry", "add", &dep, "--channel", "sandbox", "--registry-root", &r], t.path())), 0);
    assert_eq!(status(&ecm(&["registry", "add", &dep, "--registry-root", &r], t.path())), 30);

    let o = ecm(
        &["registry", "resolve", "navigation", "--range", ">=1.0", "--emb", &lab(), "--registry-root", &r],
        t.path(),
    );
    assert_eq!(status(&o), 0);
    assert!(stdout(&o).contains("selected: ecm.navigation.precise@1.3.0"), "{}", stdout(&o));

    let o = ecm(&["registry", "query", "navigation", "--emb", &lab(), "--registry-root", &r], t.path());
    assert_eq!(stdout(&o).lines().count(), 3);

    let changed = write(
        t.path(),
        "nav-1.4.0.ecm.yaml",
        &text.replace("version: 1.3.0", "version: 1.4.0").replace("last_safe_waypoint", "dock"),
    );
    let o = ecm(
        &["registry", "affected", "ecm.navigation.precise", "--proposed", &changed, "--registry-root", &r],
        t.path(),
    );
    assert_eq!(status(&o), 0);
    assert!(
        stdout(&o).contains("ecm.interaction.guide@1.3.0") && stdout(&o).contains("composition_at_risk"),
        "{}",
        stdout(&o)
    );

    let o = ecm(&["registry", "affected", "ecm.nowhere.none", "--proposed", &changed, "--registry-root", &r], t.path());
    assert_eq!(status(&o), 40);
    assert_eq!(
        status(&ecm(&["registry", "query", "teleportation", "--emb", &lab(), "--registry-root", &r], t.path())),
        40
    );

    // Promotion needs evidence the added release does not have.
    let o = ecm(
        &[
            "registry",
            "promote",
            "ecm.navigation.precise",
            "2.0.0",
            "--to",
            "stable",
            "--pol",
            &lab(),
            "--registry-root",
            &r,
        ],
        t.path(),
    );
    assert_eq!(status(&o), 30);
    assert!(stderr(&o).contains("gate"));

    let o = Command::new(env!("CARGO_BIN_EXE_ecm"))
        .args(["registry", "list"])
        .env("ECM_REGISTRY_ROOT", &r)
        .output()
        .unwrap();
    assert_eq!(stdout(&o).lines().count(), 5);
    assert_eq!(status(&ecm(&["registry", "list"], t.path())), 2);
}

#[test]
fn bench_writes_results_and_tables() {
    let t = TempDir::new().unwrap();
    let o = ecm(&["bench", "ablation", "--remove", "Signature"], t.path());
    assert_eq!(status(&o), 0);
    let line = stdout(&o).lines().find(|l| l.starts_with("- Signature")).unwrap().to_string();
    assert!(line.trim_end().ends_with("152"), "{line}");
    assert!(t.path().join("results/ablation.json").is_file());

    let o = ecm(&["bench", "exp1", "--seed", "7", "--output", "json"], t.path());
    assert_eq!(status(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let fa = |m: &str| {
        v["results"].as_array().unwrap().iter().find(|r| r["method"] == m).unwrap()["false_accepts"].as_u64().unwrap()
    };
    assert!(fa("contract") <= fa("schema_only"), "{v}");
    let again = ecm(&["bench", "exp1", "--seed", "7", "--output", "json"], t.path());
    assert_eq!(o.stdout, again.stdout);
}

#[test]
fn corrupt_fixtures_exit_fifty() {
    let t = TempDir::new().unwrap();
    let o = ecm(&["bench", "exp2", "--fixtures", &t.path().display().to_string()], t.path());
    assert_eq!(status(&o), 50);
}
