//! Minimal execution host for harness shared libraries.
//!
//! Usage: `flu-runner <library.so>`. Reads one JSON input state per line
//! on stdin, calls the library's `flu_run` export, and writes the result
//! envelope as one line on stdout. Runs until stdin closes. Crashes
//! (signals, aborts) take down this process, not the orchestrating one.

use std::ffi::{CStr, CString};
use std::io::{BufRead, Write};
use std::os::raw::c_char;

type RunFn = unsafe extern "C" fn(*const c_char) -> *mut c_char;
type FreeFn = unsafe extern "C" fn(*mut c_char);

fn main() {
    let path = match std::env::args().nth(1) {
        Some(p) => p,
        None => {
            eprintln!("usage: flu-runner <library.so>");
            std::process::exit(2);
        }
    };
    let lib = match unsafe { libloading::Library::new(&path) } {
        Ok(lib) => lib,
        Err(e) => {
            eprintln!("flu-runner: cannot load {path}: {e}");
            std::process::exit(2);
        }
    };
    let run: libloading::Symbol<RunFn> = match unsafe { lib.get(b"flu_run\0") } {
        Ok(sym) => sym,
        Err(e) => {
            eprintln!("flu-runner: {path} has no flu_run export: {e}");
            std::process::exit(2);
        }
    };
    let release: Option<libloading::Symbol<FreeFn>> = unsafe { lib.get(b"flu_free\0").ok() };

    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for line in stdin.lock().lines() {
        let line = match line {
            Ok(l) => l,
            Err(_) => break,
        };
        if line.trim().is_empty() {
            continue;
        }
        let input = match CString::new(line) {
            Ok(c) => c,
            Err(_) => {
                let _ = writeln!(
                    out,
                    "{{\"status\":\"panic\",\"message\":\"input contains NUL\"}}"
                );
                let _ = out.flush();
                continue;
            }
        };
        let raw = unsafe { run(input.as_ptr()) };
        if raw.is_null() {
            let _ = writeln!(
                out,
                "{{\"status\":\"panic\",\"message\":\"flu_run returned null\"}}"
            );
        } else {
            let text = unsafe { CStr::from_ptr(raw) }.to_string_lossy().into_owned();
            let _ = writeln!(out, "{}", text.replace(['\n', '\r'], " "));
            if let Some(f) = &release {
                unsafe { f(raw) };
            }
        }
        if out.flush().is_err() {
            break;
        }
    }
}
