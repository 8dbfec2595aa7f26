//! Golden prompts for the triangle context under the four ablation settings.

use std::path::PathBuf;

use diffexpose::prompt::{build_pr0, build_pr1, AblationFlags, PromptContext};
use diffexpose::subject::{ExecutionOutcome, InputOrigin, TestInput};

use super::{example, triangle_pair, manifest_dir};

pub const DESC_P: &str = "The code reads four stick lengths and reports whether three of them form a triangle, a degenerate triangle, or neither.";
pub const DESC_Q: &str = "The code sorts four integers and prints TRIANGLE, SEGMENT or IMPOSSIBLE depending on whether some three of them can form a triangle.";

pub fn settings() -> Vec<(&'static str, AblationFlags)> {
    let full = AblationFlags::default();
    vec![
        ("full", full),
        ("no_description", AblationFlags { include_description: false, ..full }),
        ("no_example_test", AblationFlags { include_example_test: false, ..full }),
        ("no_exec_data", AblationFlags { include_exec_data: false, ..full }),
    ]
}

pub fn golden_dir() -> PathBuf {
    manifest_dir().join("tests").join("golden")
}

pub fn render(name: &str, flags: AblationFlags) -> Vec<(String, String)> {
    let ctx = PromptContext {
        pair: triangle_pair(),
        desc_p: Some(DESC_P.into()),
        desc_q: Some(DESC_Q.into()),
        example: Some((example(), vec!["TRIANGLE".into()])),
        exec_diff_text: None,
        ablation: flags,
    };
    let tested = TestInput::single_string("10 1 1 1", InputOrigin::LlmGenerated);
    let same = ExecutionOutcome::ok(vec!["TRIANGLE".into()]);
    let pr1 = build_pr1(&tested, &same, &same, None, flags).expect("outputs agree");
    vec![(format!("pr0_{name}.txt"), build_pr0(&ctx)), (format!("pr1_{name}.txt"), pr1)]
}

/// Compares every golden; with `UPDATE_GOLDEN=1` rewrites them instead.
pub fn check_all() -> Result<usize, String> {
    let update = std::env::var("UPDATE_GOLDEN").is_ok_and(|v| v == "1");
    let dir = golden_dir();
    let mut checked = 0;
    for (name, flags) in settings() {
        for (file, text) in render(name, flags) {
            let path = dir.join(&file);
            if update {
                std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
                std::fs::write(&path, &text).map_err(|e| e.to_string())?;
            } else {
                let want = std::fs::read_to_string(&path).map_err(|e| format!("{file}: {e}"))?;
                if want != text {
                    return Err(format!("{file} differs from the rendered prompt:\n{text}"));
                }
            }
            checked += 1;
        }
    }
    Ok(checked)
}
