use std::ffi::{CStr, CString};
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::ptr;

use numprobe_ffi::*;

fn last_error() -> String {
    let p = np_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn render_and_parse_round_trip() {
    for (v, f, s) in [
        (75, NpFormat::Words, "seventy-five"),
        (181, NpFormat::Float1, "18.1"),
        (-7, NpFormat::NegativeDigits, "-7"),
    ] {
        let mut out = ptr::null_mut();
        assert_eq!(unsafe { np_render(v, f, &mut out) }, NpStatus::Ok);
        assert_eq!(unsafe { CStr::from_ptr(out) }.to_str().unwrap(), s);
        let mut back = 0i64;
        assert_eq!(unsafe { np_parse(out, f, &mut back) }, NpStatus::Ok);
        assert_eq!(back, v);
        unsafe { np_string_free(out) };
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { np_render(100, NpFormat::Words, &mut out) }, NpStatus::Numeral);
    assert!(out.is_null());
    assert!(last_error().contains("100"));

    let bad = CString::new("07").unwrap();
    let mut v = 0;
    assert_eq!(unsafe { np_parse(bad.as_ptr(), NpFormat::Digits, &mut v) }, NpStatus::Numeral);
    assert_eq!(unsafe { np_parse(ptr::null(), NpFormat::Digits, &mut v) }, NpStatus::NullArgument);
    assert_eq!(unsafe { np_parse(bad.as_ptr(), NpFormat::Digits, ptr::null_mut()) }, NpStatus::NullArgument);

    let invalid = [0xffu8, 0];
    assert_eq!(
        unsafe { np_parse(invalid.as_ptr().cast(), NpFormat::Digits, &mut v) },
        NpStatus::InvalidUtf8
    );
}

#[test]
fn error_messages_are_per_thread() {
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { np_render(-1, NpFormat::Digits, &mut out) }, NpStatus::Numeral);
    std::thread::spawn(|| assert!(np_last_error_message().is_null()))
        .join()
        .unwrap();
    assert!(!np_last_error_message().is_null());
}

#[test]
fn table_handle() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.txt");
    std::fs::write(&path, "2 3\n5 1 2 3\nfive 4 5 6\n").unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { np_table_load(cpath.as_ptr(), 0, &mut t) }, NpStatus::Ok);
    assert_eq!(unsafe { np_table_dim(t) }, 3);
    assert_eq!(unsafe { np_table_len(t) }, 2);

    let five = CString::new("five").unwrap();
    let mut buf = [0.0f64; 3];
    assert_eq!(unsafe { np_table_get(t, five.as_ptr(), buf.as_mut_ptr(), 3) }, NpStatus::Ok);
    assert_eq!(buf, [4.0, 5.0, 6.0]);
    assert_eq!(
        unsafe { np_table_get(t, five.as_ptr(), buf.as_mut_ptr(), 2) },
        NpStatus::BufferTooSmall
    );
    let six = CString::new("6").unwrap();
    assert_eq!(
        unsafe { np_table_get(t, six.as_ptr(), buf.as_mut_ptr(), 3) },
        NpStatus::InvalidArgument
    );
    unsafe { np_table_free(t) };
    unsafe { np_table_free(ptr::null_mut()) };
    assert_eq!(unsafe { np_table_dim(ptr::null()) }, 0);

    let mut t = ptr::null_mut();
    assert_eq!(unsafe { np_table_load(cpath.as_ptr(), 4, &mut t) }, NpStatus::VectorFile);
    assert!(t.is_null());
}

#[test]
fn manifest_handle_runs_a_small_suite() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.toml");
    let mut f = std::fs::File::create(&path).unwrap();
    writeln!(
        f,
        "[defaults]\nshuffles = [1]\ntrain_lists = 100\ntest_lists = 20\n[defaults.train]\nmax_epochs = 1\nmin_batches_per_epoch = 1\n\
         [[grid]]\ntasks = [\"decode\"]\nranges = [[0, 19]]\nembeddings = [\"value\"]"
    )
    .unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { np_manifest_load(cpath.as_ptr(), &mut m) }, NpStatus::Ok);
    assert_eq!(unsafe { np_manifest_len(m) }, 1);
    let out = dir.path().join("out");
    let cout = CString::new(out.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { np_manifest_run(m, cout.as_ptr()) }, NpStatus::Ok);
    assert!(out.join("report.csv").exists());
    unsafe { np_manifest_free(m) };

    std::fs::write(&path, "[[grid]]\ntasks = [\"decode\"]\nranges = [[0, 9]]\nembeddings = [\"nope\"]\n").unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { np_manifest_load(cpath.as_ptr(), &mut m) }, NpStatus::Config);
    assert!(last_error().contains("nope"));
}

#[test]
fn gradcheck_through_the_c_interface() {
    assert_eq!(np_gradcheck_family_count(), 7);
    let mut err = f64::NAN;
    assert_eq!(unsafe { np_gradcheck(0, 0, &mut err) }, NpStatus::Ok);
    assert!(err < 1e-4);
    assert_eq!(unsafe { np_gradcheck(7, 0, &mut err) }, NpStatus::InvalidArgument);
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(np_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_interface_and_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/numprobe.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "np_render",
        "np_parse",
        "np_table_load",
        "np_table_get",
        "np_manifest_run",
        "np_gradcheck",
        "np_string_free",
        "np_last_error_message",
        "typedef struct NpTable NpTable",
        "NP_STATUS_BUFFER_TOO_SMALL = 9",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"numprobe.h\"\nint main(void) {\n  char *s = 0;\n  if (np_render(75, NP_FORMAT_WORDS, &s) != NP_STATUS_OK) return 1;\n  np_string_free(s);\n  return 0;\n}\n",
    )
    .unwrap();
    let status = match Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header.parent().unwrap())
        .arg(&src)
        .status()
    {
        Ok(s) => s,
        Err(_) => {
            eprintln!("no C compiler; skipping the compile check");
            return;
        }
    };
    assert!(status.success());
}
