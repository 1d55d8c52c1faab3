use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::ptr;

use faasforge::platform::{FunctionDescriptor, ResourceLimits};
use faasforge_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

unsafe fn take(p: *mut c_char) -> String {
    let s = CStr::from_ptr(p).to_str().unwrap().to_string();
    forge_string_free(p);
    s
}

unsafe fn last_error() -> String {
    CStr::from_ptr(forge_last_error()).to_string_lossy().into_owned()
}

#[test]
fn simulator_roundtrip_and_errors() {
    unsafe {
        let mut sim = ptr::null_mut();
        assert_eq!(forge_sim_new(ptr::null(), &mut sim), ForgeStatus::Ok);
        assert_eq!(forge_sim_set(sim, c("kitchen_light").as_ptr(), c("power").as_ptr(), c("\"on\"").as_ptr()), ForgeStatus::Ok);
        let status = forge_sim_set(sim, c("kitchen_light").as_ptr(), c("brightness").as_ptr(), c("250").as_ptr());
        assert_eq!(status, ForgeStatus::InvalidArgument);
        assert!(last_error().contains("brightness"), "{}", last_error());
        assert_eq!(forge_sim_set(sim, c("garage").as_ptr(), c("power").as_ptr(), c("\"on\"").as_ptr()), ForgeStatus::NotFound);
        assert_eq!(forge_sim_set(sim, c("kitchen_light").as_ptr(), c("power").as_ptr(), c("on").as_ptr()), ForgeStatus::InvalidJson);
        let stimulus = c(r#"{"at": 9, "kind": "fire_sensor", "device": "hallway_motion"}"#);
        assert_eq!(forge_sim_apply(sim, stimulus.as_ptr()), ForgeStatus::Ok);

        let mut out = ptr::null_mut();
        assert_eq!(forge_sim_state(sim, &mut out), ForgeStatus::Ok);
        let state: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
        assert_eq!(state["devices"]["kitchen_light"]["attributes"]["power"], "on");
        assert_eq!(state["devices"]["hallway_motion"]["attributes"]["motion"], true);
        assert_eq!(state["clock"], 9);
        forge_sim_free(sim);
        forge_sim_free(ptr::null_mut());

        assert_eq!(forge_sim_state(ptr::null(), &mut out), ForgeStatus::NullArgument);
    }
}

#[test]
fn stateless_helpers() {
    unsafe {
        let mut out = ptr::null_mut();
        let raw = c("Here:\n```python\nimport home\n\ndef fn(input):\n    return input\n```\n");
        assert_eq!(forge_extract_function(raw.as_ptr(), c("python3").as_ptr(), &mut out), ForgeStatus::Ok);
        let artifact: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
        assert!(artifact["selected_code"].as_str().unwrap().starts_with("import home"));
        assert!(artifact["failure"].is_null());

        assert_eq!(forge_extract_function(raw.as_ptr(), c("ruby").as_ptr(), &mut out), ForgeStatus::UnknownRuntime);

        let code = c("def fn(input):\n    return 1\n");
        let evidence = c("Traceback\nKeyError: 'level'");
        let status = forge_classify_failure(c("invocation").as_ptr(), evidence.as_ptr(), code.as_ptr(), c("python3").as_ptr(), &mut out);
        assert_eq!(status, ForgeStatus::Ok);
        let kind: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
        assert_eq!(kind["category"], "DataHandling");
        let status = forge_classify_failure(c("extraction").as_ptr(), c("no code").as_ptr(), ptr::null(), c("nodejs").as_ptr(), &mut out);
        assert_eq!(status, ForgeStatus::Ok);
        assert!(take(out).contains("NoCode"));
        let status = forge_classify_failure(c("later").as_ptr(), evidence.as_ptr(), code.as_ptr(), c("python3").as_ptr(), &mut out);
        assert_eq!(status, ForgeStatus::InvalidJson);

        let src = c("def fn(x):\n    if x:\n        return 1\n    return 2\n");
        assert_eq!(forge_metrics_analyze(src.as_ptr(), c("python3").as_ptr(), &mut out), ForgeStatus::Ok);
        let report: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
        assert_eq!(report["cc"], 2);
        assert_eq!(forge_metrics_analyze(c("   ").as_ptr(), c("python3").as_ptr(), &mut out), ForgeStatus::InvalidArgument);

        assert_eq!(forge_metrics_analyze(ptr::null(), c("python3").as_ptr(), &mut out), ForgeStatus::NullArgument);
        assert!(last_error().contains("code"));
        assert!(!CStr::from_ptr(forge_version()).to_bytes().is_empty());
    }
}

#[test]
fn platform_lifecycle() {
    let descriptor = FunctionDescriptor {
        name: "shout".into(),
        runtime: "python3".into(),
        source_bundle: BTreeMap::from([("handler.py".into(), b"def fn(input):\n    return input.upper()\n".to_vec())]),
        entry_point: "fn".into(),
        dependencies: vec![],
        env: BTreeMap::new(),
        resource_limits: ResourceLimits::default(),
    };
    let descriptor = c(&serde_json::to_string(&descriptor).unwrap());
    unsafe {
        let mut p = ptr::null_mut();
        assert_eq!(forge_platform_new(c(r#"{"install_dependencies": false}"#).as_ptr(), &mut p), ForgeStatus::Ok);
        let mut out = ptr::null_mut();
        assert_eq!(forge_platform_deploy(p, descriptor.as_ptr(), &mut out), ForgeStatus::Ok);
        let record: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
        assert_eq!(record["status"], "Running");
        assert_eq!(forge_platform_deploy(p, descriptor.as_ptr(), &mut out), ForgeStatus::Duplicate);

        let payload = b"hello";
        let mut status = 0u16;
        let mut body = ptr::null_mut();
        assert_eq!(forge_platform_invoke(p, c("shout").as_ptr(), payload.as_ptr(), payload.len(), &mut status, &mut body), ForgeStatus::Ok);
        assert_eq!(status, 200);
        assert_eq!(take(body), "HELLO");

        assert_eq!(forge_platform_list(p, &mut out), ForgeStatus::Ok);
        assert!(take(out).contains("\"shout\""));
        assert_eq!(forge_platform_remove(p, c("shout").as_ptr()), ForgeStatus::Ok);
        let status_code = forge_platform_invoke(p, c("shout").as_ptr(), payload.as_ptr(), payload.len(), &mut status, &mut body);
        assert_eq!(status_code, ForgeStatus::NotFound);
        assert_eq!(forge_platform_remove(p, c("shout").as_ptr()), ForgeStatus::NotFound);
        forge_platform_free(p);

        assert_eq!(forge_platform_new(c("{\"adapters\": 3}").as_ptr(), &mut p), ForgeStatus::InvalidJson);
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/faasforge.h")).unwrap();
    let source = include_str!("../src/lib.rs");
    let exports: Vec<&str> = source
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 15, "{exports:?}");
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    assert!(header.contains("typedef struct ForgePlatform ForgePlatform;"));
    assert!(header.contains("FORGE_STATUS_NOT_FOUND = 5"));
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = std::process::Command::new("cc").arg("--version").output() else {
        eprintln!("no C compiler; skipping");
        return;
    };
    assert!(cc.status.success());
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    let out = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", "-I", include, "-"])
        .stdin(std::process::Stdio::piped())
        .stdout(std::process::Stdio::piped())
        .stderr(std::process::Stdio::piped())
        .spawn()
        .and_then(|mut child| {
            use std::io::Write;
            child.stdin.take().unwrap().write_all(
                b"#include \"faasforge.h\"\nint main(void) { char *out = 0; ForgeStatus s = forge_metrics_analyze(\"x = 1\", \"python3\", &out); forge_string_free(out); return s == FORGE_STATUS_OK ? 0 : 1; }\n",
            )?;
            child.wait_with_output()
        })
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
