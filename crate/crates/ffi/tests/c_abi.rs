use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spoofbench::dsp::AudioSignal;
use spoofbench::features::{extract, FeatureConfig, FeatureKind};
use spoofbench::gmm::{avg_loglik, train_gmm, GmmConfig};
use spoofbench::matrix::Matrix;
use spoofbench_ffi::*;

fn tone(n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    (0..n)
        .map(|i| {
            let t = i as f64 / 16000.0;
            0.4 * (2.0 * std::f64::consts::PI * 220.0 * t).sin() * (1.0 + (3.0 * t).sin()) + 0.01 * rng.random_range(-1.0..1.0)
        })
        .collect()
}

fn last_error() -> String {
    let p = sb_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn features_match_the_library() {
    let x = tone(16000);
    let kind = CString::new("mfcc").unwrap();
    let mut m = ptr::null_mut();
    let st = unsafe { sb_extract_features(x.as_ptr(), x.len(), 16000, kind.as_ptr(), &mut m) };
    assert_eq!(st, SbStatus::Ok);
    assert!(sb_last_error().is_null());
    let want = extract(&AudioSignal::new(x, 16000).unwrap(), &FeatureConfig::new(FeatureKind::Mfcc)).unwrap();
    unsafe {
        assert_eq!(sb_matrix_rows(m), want.values.rows());
        assert_eq!(sb_matrix_cols(m), 96);
        let data = std::slice::from_raw_parts(sb_matrix_data(m), sb_matrix_rows(m) * sb_matrix_cols(m));
        assert_eq!(data, want.values.as_slice());
        sb_matrix_free(m);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    let x = tone(4000);
    let bad = CString::new("plp").unwrap();
    let mut m = ptr::null_mut();
    let st = unsafe { sb_extract_features(x.as_ptr(), x.len(), 16000, bad.as_ptr(), &mut m) };
    assert_eq!(st, SbStatus::InvalidArgument);
    assert!(last_error().contains("plp"));
    assert!(m.is_null());

    let st = unsafe { sb_extract_features(x.as_ptr(), x.len(), 16000, ptr::null(), &mut m) };
    assert_eq!(st, SbStatus::NullPointer);

    let short = CString::new("mfcc").unwrap();
    let st = unsafe { sb_extract_features(x.as_ptr(), 100, 16000, short.as_ptr(), &mut m) };
    assert_eq!(st, SbStatus::EmptyFeatures);

    let missing = CString::new("/nonexistent/model.spgm").unwrap();
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { sb_gmm_load(missing.as_ptr(), &mut g) }, SbStatus::Io);
    unsafe {
        sb_gmm_free(ptr::null_mut());
        sb_matrix_free(ptr::null_mut());
        assert_eq!(sb_matrix_rows(ptr::null()), 0);
    }
}

#[test]
fn gmm_handles_score_like_the_library() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let data: Vec<f64> = (0..400 * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let feats = Matrix::from_vec(400, 3, data.clone()).unwrap();
    let cfg = GmmConfig {
        n_components: 4,
        ..GmmConfig::default()
    };
    let (model, _) = train_gmm(&[&feats], &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.spgm");
    model.write(&path).unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    unsafe {
        let mut g = ptr::null_mut();
        assert_eq!(sb_gmm_load(cpath.as_ptr(), &mut g), SbStatus::Ok);
        assert_eq!((sb_gmm_components(g), sb_gmm_dim(g)), (4, 3));
        let mut m = ptr::null_mut();
        assert_eq!(sb_matrix_from_data(data.as_ptr(), 400, 3, &mut m), SbStatus::Ok);
        let mut ll = 0.0;
        assert_eq!(sb_gmm_avg_loglik(g, m, &mut ll), SbStatus::Ok);
        assert_eq!(ll, avg_loglik(&feats, &model).unwrap());
        let mut llr = f64::NAN;
        assert_eq!(sb_gmm_llr(g, g, m, &mut llr), SbStatus::Ok);
        assert_eq!(llr, 0.0);

        let mut wrong = ptr::null_mut();
        assert_eq!(sb_matrix_from_data(data.as_ptr(), 600, 2, &mut wrong), SbStatus::Ok);
        assert_eq!(sb_gmm_avg_loglik(g, wrong, &mut ll), SbStatus::DimensionMismatch);
        sb_matrix_free(wrong);
        sb_matrix_free(m);
        sb_gmm_free(g);
    }
}

#[test]
fn eer_endpoints() {
    let tar = [0.9, 0.8, 0.7];
    let non = [0.1, 0.2];
    let mut eer = f64::NAN;
    unsafe {
        assert_eq!(sb_eer_rocch(tar.as_ptr(), 3, non.as_ptr(), 2, &mut eer), SbStatus::Ok);
        assert_eq!(eer, 0.0);
        let c = [1.0; 4];
        assert_eq!(sb_eer_rocch(c.as_ptr(), 4, c.as_ptr(), 4, &mut eer), SbStatus::Ok);
        assert!((eer - 0.5).abs() < 1e-12);
        assert_ne!(sb_eer_rocch(tar.as_ptr(), 3, ptr::null(), 0, &mut eer), SbStatus::Ok);
    }
}

#[test]
fn mixing_hits_the_target_snr() {
    let x = tone(16000);
    let white = CString::new("white").unwrap();
    let mut y = vec![0.0; x.len()];
    let mut snr = f64::NAN;
    unsafe {
        let st = sb_mix_at_snr(x.as_ptr(), x.len(), 16000, white.as_ptr(), 10.0, 3, y.as_mut_ptr(), &mut snr);
        assert_eq!(st, SbStatus::Ok);
    }
    assert!((snr - 10.0).abs() < 0.5);
    assert!(y.iter().zip(&x).any(|(a, b)| a != b));
    let mut y2 = vec![0.0; x.len()];
    unsafe {
        sb_mix_at_snr(x.as_ptr(), x.len(), 16000, white.as_ptr(), 10.0, 3, y2.as_mut_ptr(), ptr::null_mut());
    }
    assert_eq!(y, y2);

    let mut lead = vec![0.0; 4000];
    lead.extend(tone(12000));
    let wiener = CString::new("wiener").unwrap();
    let mut z = vec![0.0; lead.len()];
    assert_eq!(
        unsafe { sb_enhance(lead.as_ptr(), lead.len(), 16000, wiener.as_ptr(), z.as_mut_ptr()) },
        SbStatus::Ok
    );
    assert!(z.iter().all(|v| v.is_finite()));
}

#[test]
fn header_declares_the_api() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/spoofbench.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for sym in ["sb_gmm_load", "sb_gmm_free", "sb_eer_rocch", "sb_mix_at_snr", "sb_last_error", "typedef struct SbGmm SbGmm"] {
        assert!(text.contains(sym), "{sym} missing from header");
    }
    // compile check when a C compiler is around
    if let Ok(st) = std::process::Command::new("cc").args(["-fsyntax-only", "-x", "c"]).arg(&header).status() {
        assert!(st.success());
    }
}
