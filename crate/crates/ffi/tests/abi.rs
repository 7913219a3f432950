use std::ffi::{CStr, CString};
use std::ptr;

use rwre_core::config::ExperimentConfig;
use rwre_core::env::{EnvSource, Environment};
use rwre_core::lattice::{Dim, LatticePoint};
use rwre_core::regen;
use rwre_core::renorm::{self, ExplicitTraps, ThreatProblem};
use rwre_core::rng::Seed;
use rwre_ffi::*;

const BOOLEAN: &str = "env = \"boolean\"\nkernel.kappa = 0.1\n";
const RENEWAL: &str = "env = \"renewal\"\nkernel.kappa = 0.1\n";

fn model(text: &str) -> *mut RwreModel {
    let c = CString::new(text).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(
        unsafe { rwre_model_new(c.as_ptr(), &mut m) },
        RwreStatus::Ok
    );
    m
}

fn last_error() -> String {
    let p = rwre_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(rwre_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn config_error_names_the_key() {
    let c = CString::new("env = \"boolean\"\n").unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(
        unsafe { rwre_model_new(c.as_ptr(), &mut m) },
        RwreStatus::Config
    );
    assert!(m.is_null());
    assert!(last_error().contains("kernel.kappa"));
    // A later success clears the message.
    let m = model(BOOLEAN);
    assert!(rwre_last_error_message().is_null());
    unsafe { rwre_model_free(m) };
}

#[test]
fn null_arguments_are_rejected() {
    let mut m = ptr::null_mut();
    assert_eq!(
        unsafe { rwre_model_new(ptr::null(), &mut m) },
        RwreStatus::NullPointer
    );
    let mut d = 0usize;
    assert_eq!(
        unsafe { rwre_model_dim(ptr::null(), &mut d) },
        RwreStatus::NullPointer
    );
    let m = model(BOOLEAN);
    assert_eq!(
        unsafe { rwre_model_dim(m, ptr::null_mut()) },
        RwreStatus::NullPointer
    );
    unsafe {
        rwre_model_free(m);
        rwre_model_free(ptr::null_mut());
        rwre_env_free(ptr::null_mut());
        rwre_blocks_free(ptr::null_mut());
    }
}

#[test]
fn invalid_utf8_config() {
    let bytes = [0xffu8, 0xfe, 0];
    let mut m = ptr::null_mut();
    let s = unsafe { rwre_model_new(bytes.as_ptr().cast(), &mut m) };
    assert_eq!(s, RwreStatus::InvalidUtf8);
}

#[test]
fn fields_agree_with_the_library() {
    for text in [BOOLEAN, RENEWAL] {
        let m = model(text);
        let direct = ExperimentConfig::parse(text)
            .unwrap()
            .env_config()
            .unwrap()
            .model()
            .unwrap();
        let mut env = ptr::null_mut();
        assert_eq!(unsafe { rwre_env_new(m, 42, &mut env) }, RwreStatus::Ok);
        let r = direct.realize(Seed(42));
        for x in -3i64..=3 {
            for t in -3i64..=3 {
                let (mut w, mut e) = (0u64, false);
                assert_eq!(
                    unsafe { rwre_env_omega(env, &x, 1, t, &mut w) },
                    RwreStatus::Ok
                );
                assert_eq!(
                    unsafe { rwre_env_eta(env, &x, 1, t, &mut e) },
                    RwreStatus::Ok
                );
                let z = LatticePoint::new1(x, t);
                assert_eq!(w, r.omega(&z).unwrap());
                assert_eq!(e, r.eta(&z).unwrap());
            }
        }
        let x = [0i64, 0];
        let mut w = 0;
        assert_eq!(
            unsafe { rwre_env_omega(env, x.as_ptr(), 2, 0, &mut w) },
            RwreStatus::DimensionMismatch
        );
        unsafe {
            rwre_env_free(env);
            rwre_model_free(m);
        }
    }
}

#[test]
fn min_threats_matches_enumeration() {
    let traps: [i64; 6] = [0, 2, 1, 3, -1, 4];
    let mut out = 0;
    assert_eq!(
        unsafe { rwre_min_threats(1, traps.as_ptr(), 3, 2, 2, 1, &mut out) },
        RwreStatus::Ok
    );
    let set = ExplicitTraps::new(
        Dim::ONE,
        traps.chunks(2).map(|c| LatticePoint::new1(c[0], c[1])),
    );
    assert_eq!(
        out,
        renorm::min_threats_brute(&ThreatProblem::m_j(2, 2, 1), &set).unwrap()
    );
    assert_eq!(
        unsafe { rwre_min_threats(1, ptr::null(), 0, 2, 2, 1, &mut out) },
        RwreStatus::Ok
    );
    assert_eq!(out, 0);
    assert_eq!(
        unsafe { rwre_min_threats(1, traps.as_ptr(), 3, 2, 0, 1, &mut out) },
        RwreStatus::Usage
    );
    assert_eq!(
        unsafe { rwre_min_threats(0, traps.as_ptr(), 3, 2, 2, 1, &mut out) },
        RwreStatus::Usage
    );

    let m = model(BOOLEAN);
    let mut env = ptr::null_mut();
    assert_eq!(unsafe { rwre_env_new(m, 5, &mut env) }, RwreStatus::Ok);
    assert_eq!(
        unsafe { rwre_env_min_threats(m, env, 2, 2, &mut out) },
        RwreStatus::Ok
    );
    let direct = ExperimentConfig::parse(BOOLEAN)
        .unwrap()
        .env_config()
        .unwrap()
        .model()
        .unwrap()
        .realize(Seed(5));
    let brute = renorm::min_threats_brute(&ThreatProblem::m_j(2, 2, 1), &renorm::EtaTraps(&direct))
        .unwrap();
    assert_eq!(out, brute);
    unsafe {
        rwre_env_free(env);
        rwre_model_free(m);
    }
}

#[test]
fn blocks_and_limits_agree_with_the_library() {
    let m = model(BOOLEAN);
    let mut b = ptr::null_mut();
    assert_eq!(
        unsafe { rwre_sample_blocks(m, 200, 9, 0, &mut b) },
        RwreStatus::Ok
    );
    let mut len = 0;
    assert_eq!(unsafe { rwre_blocks_len(b, &mut len) }, RwreStatus::Ok);
    assert_eq!(len, 200);

    let cfg = ExperimentConfig::parse(BOOLEAN).unwrap();
    let env = cfg.env_config().unwrap().model().unwrap();
    let opts = regen::BlockOptions::default();
    let direct = regen::sample_blocks(&env, &cfg.kernel().unwrap(), 200, Seed(9), &opts).unwrap();
    for (i, d) in direct.iter().enumerate() {
        let mut blk = RwreBlock::default();
        assert_eq!(unsafe { rwre_blocks_get(b, i, &mut blk) }, RwreStatus::Ok);
        assert_eq!(
            (blk.t1, blk.disp[0], blk.censored, blk.seed),
            (d.t1, d.disp[0], d.censored, d.seed)
        );
    }
    let mut blk = RwreBlock::default();
    assert_eq!(
        unsafe { rwre_blocks_get(b, 200, &mut blk) },
        RwreStatus::Usage
    );

    let mut lim = RwreLimits::default();
    assert_eq!(
        unsafe { rwre_estimate_limits(b, 50, 3, &mut lim) },
        RwreStatus::Ok
    );
    let e = regen::estimate_limits(&direct, Dim::ONE, 50, Seed(3)).unwrap();
    assert_eq!(lim.dim, 1);
    assert_eq!(lim.v_hat[0], e.v_hat[0]);
    assert_eq!(lim.sigma_hat[0], e.sigma_hat[0][0]);
    assert_eq!((lim.v_ci_lo[0], lim.v_ci_hi[0]), e.v_ci[0]);
    assert_eq!(lim.v_hat[1], 0.0);
    unsafe {
        rwre_blocks_free(b);
        rwre_model_free(m);
    }
}
