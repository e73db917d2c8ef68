//! The C entry points driven the way a C caller would.

use std::ffi::CString;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use active_irs_ffi::*;

#[test]
fn solve_one_drop_through_the_c_api() {
    let text = CString::new("irs_elements = 4\nsinr_req = 2\n").unwrap();
    let mut cfg = ptr::null_mut();
    let mut ch = ptr::null_mut();
    let mut res = ptr::null_mut();
    unsafe {
        assert_eq!(airs_config_parse(text.as_ptr(), &mut cfg), AirsStatus::Ok);
        assert_eq!(airs_channel_draw(cfg, 11, &mut ch), AirsStatus::Ok);

        let (mut b1, mut b1_ok) = (0.0, 0);
        assert_eq!(airs_baseline_no_irs(cfg, ch, &mut b1, &mut b1_ok), AirsStatus::Ok);
        assert_eq!(b1_ok, 1);

        assert_eq!(airs_solve(cfg, ch, &mut res), AirsStatus::Ok);
        assert_eq!(airs_result_feasible(res), 1);
        assert!(airs_result_iterations(res) >= 1);

        let mut p = 0.0;
        assert_eq!(airs_result_bs_power_w(res, &mut p), AirsStatus::Ok);
        assert!(p > 0.0 && p.is_finite());

        // the trace starts at the initial point and never increases
        let n = airs_result_trace_len(res);
        assert!(n >= 2);
        let mut prev = f64::INFINITY;
        for i in 0..n {
            let mut obj = 0.0;
            assert_eq!(airs_result_trace_objective(res, i, &mut obj), AirsStatus::Ok);
            assert!(obj <= prev * (1.0 + 1e-7));
            prev = obj;
        }
        let mut o = 0.0;
        assert_eq!(airs_result_trace_objective(res, n, &mut o), AirsStatus::InvalidArgument);

        // beamformer energies add up to the reported power
        let mut total = 0.0;
        for k in 0..3 {
            let (mut re, mut im) = ([0.0; 4], [0.0; 4]);
            assert_eq!(
                airs_result_beamformer(res, k, re.as_mut_ptr(), im.as_mut_ptr(), 4),
                AirsStatus::Ok
            );
            total += re.iter().chain(im.iter()).map(|x| x * x).sum::<f64>();
        }
        assert!((total - p).abs() <= 1e-12 * p);
        let (mut re, mut im) = ([0.0; 4], [0.0; 4]);
        assert_eq!(
            airs_result_beamformer(res, 3, re.as_mut_ptr(), im.as_mut_ptr(), 4),
            AirsStatus::InvalidArgument
        );
        assert_eq!(
            airs_result_reflection(res, re.as_mut_ptr(), im.as_mut_ptr(), 3),
            AirsStatus::InvalidArgument
        );
        assert_eq!(
            airs_result_reflection(res, re.as_mut_ptr(), im.as_mut_ptr(), 4),
            AirsStatus::Ok
        );
        assert!(re.iter().chain(im.iter()).any(|x| *x != 0.0));

        airs_result_free(res);
        airs_channel_free(ch);
        airs_config_free(cfg);
    }
}

#[test]
fn header_compiles_as_c() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = dir.join("include/active_irs.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in ["airs_solve", "airs_last_error", "airs_result_free", "AIRS_STATUS_PANIC"] {
        assert!(text.contains(f), "{f} missing from header");
    }
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"active_irs.h\"\n\
         int main(void) {\n\
           AirsConfig *c = airs_config_new();\n\
           AirsStatus s = airs_config_set_seed(c, 1);\n\
           airs_config_free(c);\n\
           return s == AIRS_STATUS_OK ? 0 : 1;\n\
         }\n",
    )
    .unwrap();
    let out = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(dir.join("include"))
        .arg(&src)
        .output()
        .expect("a C compiler on PATH");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
