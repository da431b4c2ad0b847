use std::process::Command;

fn main() {
    println!("cargo:rerun-if-env-changed=BYZANT_BUILD");
    if std::env::var_os("BYZANT_BUILD").is_some() {
        return;
    }
    let described = Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty());
    if let Some(v) = described {
        println!("cargo:rustc-env=BYZANT_BUILD={v}");
    }
}
