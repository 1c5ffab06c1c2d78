//! Extract commits from a local git repository.
//!
//! cargo run --example extract_git [path] [project_id]
//! Without a path, a small synthetic repository is written to a temporary directory first.

use glla::extract::{extract_git, SourceDescriptor, SourceKind};
use glla::synthgen::{generate_cohort, team_id, CohortSpec};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let tmp = tempfile::tempdir().unwrap();
    let (path, project) = match args.first() {
        Some(p) => (p.clone(), args.get(1).cloned().unwrap_or_else(|| "repo".into())),
        None => {
            let cohort = generate_cohort(&CohortSpec { teams: 1, days: 5, ..CohortSpec::reference(3) });
            cohort.materialize(tmp.path()).unwrap();
            (tmp.path().join("repos/team-01.git").display().to_string(), team_id(0))
        }
    };

    let part = extract_git(&SourceDescriptor::new(SourceKind::GitRepo, &path, &project)).expect("readable repository");
    let on_main = part.commits.iter().filter(|c| c.on_default_first_parent).count();
    let merges = part.commits.iter().filter(|c| c.is_merge()).count();
    println!("{} commits ({on_main} on the default branch's first-parent chain, {merges} merges)", part.commits.len());
    println!("{} distinct author identities", part.actors.len());
    for c in part.commits.iter().take(5) {
        let ins = c.insertions.as_ref().map(|m| m.label()).unwrap_or_default();
        println!("  {} {} +{ins} {}", &c.sha[..10], c.authored_at.label(), c.message.lines().next().unwrap_or(""));
    }
}
