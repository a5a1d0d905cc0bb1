use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use dyn4d_ffi::*;

fn last_error() -> String {
    let p = dyn4d_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn take_string(p: *mut std::ffi::c_char) -> String {
    assert!(!p.is_null());
    let s = unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned();
    unsafe { dyn4d_string_free(p) };
    s
}

fn tiny_config() -> *mut Dyn4dConfig {
    let json = CString::new(
        r#"{"schema_version": 1, "seed": 5,
            "scene": {"render": {"width": 16, "height": 16}},
            "dataset": {"assets": 1}}"#,
    )
    .unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { dyn4d_config_from_json(json.as_ptr(), &mut cfg) }, Dyn4dStatus::Ok);
    cfg
}

#[test]
fn version_is_static_string() {
    let v = unsafe { CStr::from_ptr(dyn4d_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn null_arguments_are_reported() {
    let status = unsafe { dyn4d_config_default(ptr::null_mut()) };
    assert_eq!(status, Dyn4dStatus::NullPointer);
    assert!(last_error().contains("out"));

    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { dyn4d_config_default(&mut cfg) }, Dyn4dStatus::Ok);
    assert!(dyn4d_last_error().is_null());
    unsafe { dyn4d_config_free(cfg) };
    unsafe { dyn4d_config_free(ptr::null_mut()) };
}

#[test]
fn config_json_round_trip_keeps_hash() {
    let mut cfg = ptr::null_mut();
    unsafe {
        assert_eq!(dyn4d_config_default(&mut cfg), Dyn4dStatus::Ok);
        assert_eq!(dyn4d_config_set_seed(cfg, 42), Dyn4dStatus::Ok);
        let mut json = ptr::null_mut();
        assert_eq!(dyn4d_config_to_json(cfg, &mut json), Dyn4dStatus::Ok);
        let json = CString::new(take_string(json)).unwrap();
        let mut back = ptr::null_mut();
        assert_eq!(dyn4d_config_from_json(json.as_ptr(), &mut back), Dyn4dStatus::Ok);

        let (mut a, mut b) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(dyn4d_config_hash(cfg, &mut a), Dyn4dStatus::Ok);
        assert_eq!(dyn4d_config_hash(back, &mut b), Dyn4dStatus::Ok);
        let (a, b) = (take_string(a), take_string(b));
        assert_eq!(a, b);
        assert_eq!(a.len(), 64);
        dyn4d_config_free(cfg);
        dyn4d_config_free(back);
    }
}

#[test]
fn invalid_config_is_rejected() {
    let bad = CString::new(r#"{"schema_version": 1, "curation": {"s_low": 0.99}}"#).unwrap();
    let mut cfg = ptr::null_mut();
    let status = unsafe { dyn4d_config_from_json(bad.as_ptr(), &mut cfg) };
    assert_eq!(status, Dyn4dStatus::InvalidArgument);
    assert!(cfg.is_null());

    let missing = CString::new("/nonexistent/dyn4d.json").unwrap();
    assert_eq!(unsafe { dyn4d_config_load(missing.as_ptr(), &mut cfg) }, Dyn4dStatus::Io);
}

#[test]
fn guidance_matches_scalar_formula() {
    let cond = [1.0, -2.0, 0.25];
    let uncond = [0.5, 1.0, 0.0];
    let stat = [0.8, 0.0, 0.5];
    let mut out = [0.0; 3];
    let status = unsafe { dyn4d_cfg_combine(cond.as_ptr(), uncond.as_ptr(), stat.as_ptr(), 3, 7.0, 0.5, out.as_mut_ptr()) };
    assert_eq!(status, Dyn4dStatus::Ok);
    assert!((out[0] - 4.6).abs() < 1e-12);
    for i in 0..3 {
        let expect = 8.5 * cond[i] - 7.0 * uncond[i] - 0.5 * stat[i];
        assert!((out[i] - expect).abs() < 1e-12);
    }
    let status = unsafe { dyn4d_cfg_combine(cond.as_ptr(), uncond.as_ptr(), stat.as_ptr(), 3, f64::NAN, 0.5, out.as_mut_ptr()) };
    assert_eq!(status, Dyn4dStatus::InvalidArgument);
}

#[test]
fn stage_errors_map_to_status_codes() {
    let dir = tempfile::tempdir().unwrap();
    let root = CString::new(dir.path().to_str().unwrap()).unwrap();
    let cfg = tiny_config();
    unsafe {
        let mut ws = ptr::null_mut();
        assert_eq!(dyn4d_workspace_open(root.as_ptr(), &mut ws), Dyn4dStatus::Ok);
        let status = dyn4d_run_stage(ws, cfg, Dyn4dStage::Eval as i32, 0, ptr::null_mut());
        assert_eq!(status, Dyn4dStatus::Precondition);
        assert!(last_error().contains("markers/gen-dataset.json"));
        assert_eq!(dyn4d_run_stage(ws, cfg, 17, 0, ptr::null_mut()), Dyn4dStatus::InvalidArgument);
        assert_eq!(dyn4d_run_stage(ws, cfg, 0, 8, ptr::null_mut()), Dyn4dStatus::InvalidArgument);

        let mut hash = ptr::null_mut();
        assert_eq!(dyn4d_run_e2e(ws, cfg, DYN4D_FLAG_DRY_RUN, &mut hash), Dyn4dStatus::Ok);
        assert!(hash.is_null());
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
        dyn4d_workspace_free(ws);
        dyn4d_config_free(cfg);
    }
}

#[test]
fn generated_videos_are_readable() {
    let dir = tempfile::tempdir().unwrap();
    let root = CString::new(dir.path().to_str().unwrap()).unwrap();
    let cfg = tiny_config();
    unsafe {
        let mut ws = ptr::null_mut();
        assert_eq!(dyn4d_workspace_open(root.as_ptr(), &mut ws), Dyn4dStatus::Ok);
        let mut outcome = Dyn4dOutcome::Planned;
        assert_eq!(dyn4d_run_stage(ws, cfg, Dyn4dStage::GenDataset as i32, 0, &mut outcome), Dyn4dStatus::Ok);
        assert_eq!(outcome, Dyn4dOutcome::Ran);
        assert_eq!(dyn4d_run_stage(ws, cfg, Dyn4dStage::GenDataset as i32, 0, &mut outcome), Dyn4dStatus::Ok);
        assert_eq!(outcome, Dyn4dOutcome::Skipped);

        let asset = dir.path().join("dataset").join("asset_0000");
        let open = |name: &str| {
            let p = CString::new(asset.join(name).to_str().unwrap()).unwrap();
            let mut v = ptr::null_mut();
            assert_eq!(dyn4d_video_read(p.as_ptr(), &mut v), Dyn4dStatus::Ok, "{}", name);
            v
        };
        let (front, front_static) = (open("front.orb4d"), open("front_static.orb4d"));
        let mut info = Dyn4dVideoInfo::default();
        assert_eq!(dyn4d_video_info(front, &mut info), Dyn4dStatus::Ok);
        assert_eq!(
            info,
            Dyn4dVideoInfo {
                frames: 24,
                width: 16,
                height: 16,
                is_static: false
            }
        );
        let mut rgb = vec![0f32; 16 * 16 * 3];
        assert_eq!(dyn4d_video_frame_rgb(front, 3, rgb.as_mut_ptr(), rgb.len()), Dyn4dStatus::Ok);
        assert!(rgb.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(dyn4d_video_frame_rgb(front, 24, rgb.as_mut_ptr(), rgb.len()), Dyn4dStatus::InvalidArgument);
        assert_eq!(dyn4d_video_frame_rgb(front, 0, rgb.as_mut_ptr(), 5), Dyn4dStatus::InvalidArgument);

        let mut m = -1.0;
        assert_eq!(dyn4d_motion_magnitude(front, front_static, &mut m), Dyn4dStatus::Ok);
        assert!(m > 0.0);
        assert_eq!(dyn4d_motion_magnitude(front_static, front, &mut m), Dyn4dStatus::InvalidArgument);

        dyn4d_video_free(front);
        dyn4d_video_free(front_static);
        dyn4d_workspace_free(ws);
        dyn4d_config_free(cfg);
    }
}

#[test]
fn header_declares_the_api() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include").join("dyn4d.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "dyn4d_last_error",
        "dyn4d_config_load",
        "dyn4d_run_stage",
        "dyn4d_run_e2e",
        "dyn4d_video_frame_rgb",
        "dyn4d_cfg_combine",
        "DYN4D_STATUS_PRECONDITION",
        "DYN4D_STAGE_RECONSTRUCT = 4",
        "typedef struct Dyn4dWorkspace Dyn4dWorkspace",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }

    let Ok(status) = Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(&header)
        .status()
    else {
        return;
    };
    assert!(status.success(), "header does not compile as C");
}
