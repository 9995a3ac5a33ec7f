use std::ffi::{CStr, CString};
use std::ptr;

use traffic_adp_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(ta_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

struct Handle(*mut TaSimulation);

impl Drop for Handle {
    fn drop(&mut self) {
        unsafe { ta_simulation_free(self.0) };
    }
}

fn from_cfg(body: &str) -> (TaStatus, Handle) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sim.cfg");
    std::fs::write(&path, body).unwrap();
    let c = CString::new(path.to_str().unwrap()).unwrap();
    let mut sim = ptr::null_mut();
    let status = unsafe { ta_simulation_from_config(c.as_ptr(), &mut sim) };
    (status, Handle(sim))
}

#[test]
fn default_simulation_steps_and_conserves_mass() {
    let mut sim = ptr::null_mut();
    assert_eq!(unsafe { ta_simulation_new_default(&mut sim) }, TaStatus::Ok);
    let sim = Handle(sim);

    let (mut nx, mut nv, mut k) = (0usize, 0usize, 0usize);
    unsafe {
        assert_eq!(
            ta_simulation_grid_shape(sim.0, &mut nx, &mut nv),
            TaStatus::Ok
        );
        assert_eq!(ta_simulation_basis_order(sim.0, &mut k), TaStatus::Ok);
    }
    assert_eq!((nx, nv, k), (81, 81, 2));

    let (mut e0, mut e1, mut t, mut m) = (0.0, 0.0, 0.0, 0.0);
    unsafe {
        assert_eq!(ta_simulation_hjb_error(sim.0, &mut e0), TaStatus::Ok);
        assert_eq!(ta_simulation_step(sim.0, 4), TaStatus::Ok);
        assert_eq!(ta_simulation_time(sim.0, &mut t), TaStatus::Ok);
        assert_eq!(ta_simulation_mass(sim.0, &mut m), TaStatus::Ok);
        assert_eq!(ta_simulation_hjb_error(sim.0, &mut e1), TaStatus::Ok);
    }
    assert!((t - 0.01).abs() < 1e-15);
    assert!((m - 1.0).abs() < 1e-12);
    assert!(e1 < e0);

    let mut rho = vec![0.0; nx * nv];
    let (mut a, mut b) = (vec![0.0; k * k], vec![0.0; k * k]);
    unsafe {
        assert_eq!(
            ta_simulation_copy_density(sim.0, rho.as_mut_ptr(), rho.len()),
            TaStatus::Ok
        );
        assert_eq!(
            ta_simulation_copy_weights(sim.0, a.as_mut_ptr(), b.as_mut_ptr(), k * k),
            TaStatus::Ok
        );
    }
    assert!(rho.iter().all(|r| *r >= 0.0));
    assert!(a.iter().chain(&b).all(|w| w.is_finite()));
    // The sine row i = 0 never receives a gradient.
    assert_eq!(&a[..2], &[0.1, 0.1]);
}

#[test]
fn matches_the_library_bit_for_bit() {
    use traffic_adp::{AdpSystem, GridSpec, ModelParams, RunConfig};
    let (p, r) = (ModelParams::default(), RunConfig::default());
    let sys = AdpSystem::new(&GridSpec::from_config(&p, &r), &p);
    let mut s = sys.initial_state(r.weight_init).unwrap();
    for _ in 0..3 {
        s = sys.ssp_rk2_step(&s, r.dt).unwrap();
    }

    let mut sim = ptr::null_mut();
    assert_eq!(unsafe { ta_simulation_new_default(&mut sim) }, TaStatus::Ok);
    let sim = Handle(sim);
    let mut rho = vec![0.0; s.rho.values.len()];
    unsafe {
        assert_eq!(ta_simulation_step(sim.0, 3), TaStatus::Ok);
        assert_eq!(
            ta_simulation_copy_density(sim.0, rho.as_mut_ptr(), rho.len()),
            TaStatus::Ok
        );
    }
    assert_eq!(rho, s.rho.values);
}

#[test]
fn argument_errors_are_reported() {
    let mut sim = ptr::null_mut();
    assert_eq!(unsafe { ta_simulation_new_default(&mut sim) }, TaStatus::Ok);
    let sim = Handle(sim);
    let mut buf = vec![0.0; 10];
    unsafe {
        assert_eq!(
            ta_simulation_copy_density(sim.0, buf.as_mut_ptr(), buf.len()),
            TaStatus::InvalidArgument
        );
        assert!(last_error().contains("10"));
        assert_eq!(
            ta_simulation_copy_density(sim.0, ptr::null_mut(), 6561),
            TaStatus::NullPointer
        );
        assert_eq!(
            ta_simulation_step(ptr::null_mut(), 1),
            TaStatus::NullPointer
        );
        assert_eq!(
            ta_simulation_time(ptr::null(), buf.as_mut_ptr()),
            TaStatus::NullPointer
        );
        assert_eq!(
            ta_simulation_new_default(ptr::null_mut()),
            TaStatus::NullPointer
        );
        ta_simulation_free(ptr::null_mut());
    }
}

#[test]
fn configuration_errors_map_to_codes() {
    let (status, _h) = from_cfg("T = 1\nnx = 21\nnv = 21\n");
    assert_eq!(status, TaStatus::Ok);

    let (status, h) = from_cfg("dt = 0.5\n");
    assert_eq!(status, TaStatus::Validation);
    assert!(h.0.is_null());
    assert!(
        last_error().contains("admissible=false"),
        "{}",
        last_error()
    );

    let (status, _) = from_cfg("warp = 9\n");
    assert_eq!(status, TaStatus::Config);
    assert!(last_error().contains("warp"));

    let missing = CString::new("/nonexistent/dir/sim.cfg").unwrap();
    let mut sim = ptr::null_mut();
    assert_eq!(
        unsafe { ta_simulation_from_config(missing.as_ptr(), &mut sim) },
        TaStatus::Io
    );
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(ta_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn generated_header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/include/traffic_adp.h"
    ))
    .unwrap();
    for name in [
        "typedef struct TaSimulation TaSimulation;",
        "TA_STATUS_NULL_POINTER",
        "ta_simulation_new_default",
        "ta_simulation_from_config",
        "ta_simulation_free",
        "ta_simulation_step",
        "ta_simulation_copy_density",
        "ta_simulation_copy_weights",
        "ta_last_error_message",
        "ta_version",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

#[test]
fn c_client_links_and_runs() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if std::process::Command::new(&cc)
        .arg("--version")
        .output()
        .is_err()
    {
        println!("skipped: no C compiler `{cc}`");
        return;
    }
    // tests live in <target>/<profile>/deps
    let profile_dir = std::env::current_exe()
        .unwrap()
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .to_path_buf();
    let lib = profile_dir.join("libtraffic_adp_ffi.a");
    assert!(lib.is_file(), "missing {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let manifest = env!("CARGO_MANIFEST_DIR");
    let build = std::process::Command::new(&cc)
        .arg(format!("{manifest}/examples/smoke.c"))
        .arg(format!("-I{manifest}/include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(
        build.status.success(),
        "{}",
        String::from_utf8_lossy(&build.stderr)
    );
    let out = std::process::Command::new(&exe).output().unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(
        text.contains("nx=81 nv=81 t=0.0250 mass=1.000000000000"),
        "{text}"
    );
}
