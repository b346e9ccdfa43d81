//! Brute-force count of applicable (statement, rule) pairs for MiniLang
//! projects. Works on raw lines with regexes; shares nothing with the
//! injection engine.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use regex::Regex;

/// Builtin callables and their arity.
const BUILTINS: &[(&str, usize)] = &[("assert", 2), ("len", 1), ("char_at", 2), ("to_str", 1), ("abs", 1)];

#[derive(Debug, Clone)]
struct Stmt {
    /// First line, trimmed.
    header: String,
    /// All lines of the statement, trimmed, joined by spaces.
    text: String,
    /// Index of the enclosing block: (function, parent statement, block number).
    block: (usize, Option<usize>, usize),
    parent: Option<usize>,
    func: usize,
    compound: bool,
    /// Number of statements directly inside the first block.
    first_block_len: usize,
}

#[derive(Debug, Clone)]
struct Func {
    ret: String,
    name: String,
    arity: usize,
    bools: Vec<(usize, String)>,
}

struct File {
    stmts: Vec<Stmt>,
    funcs: Vec<Func>,
}

fn strip_strings(s: &str) -> String {
    Regex::new(r#""(?:[^"\\]|\\.)*""#).unwrap().replace_all(s, "\"\"").into_owned()
}

fn scan(src: &str) -> File {
    let header_re = Regex::new(r"^(int|bool|str|void) (\w+)\((.*)\) \{$").unwrap();
    let mut stmts: Vec<Stmt> = Vec::new();
    let mut funcs: Vec<Func> = Vec::new();
    // Open compound statements, innermost last, with their block counter.
    let mut open: Vec<(usize, usize)> = Vec::new();
    for raw in src.lines() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with("//") {
            continue;
        }
        if let Some(c) = header_re.captures(line) {
            let params = c[3].trim();
            let arity = if params.is_empty() { 0 } else { params.split(',').count() };
            let bools = params
                .split(',')
                .filter_map(|p| p.trim().strip_prefix("bool ").map(|n| (0, n.trim().to_string())))
                .collect();
            funcs.push(Func {
                ret: c[1].to_string(),
                name: c[2].to_string(),
                arity,
                bools,
            });
            continue;
        }
        let f = funcs.len() - 1;
        if line == "}" {
            for &(j, _) in &open {
                stmts[j].text.push_str(" }");
            }
            open.pop();
            continue;
        }
        if line.starts_with("} else") {
            let &(i, n) = open.last().unwrap();
            for &(j, _) in &open {
                stmts[j].text.push(' ');
                stmts[j].text.push_str(line);
            }
            *open.last_mut().unwrap() = (i, n + 1);
            continue;
        }
        let (parent, block) = match open.last() {
            Some(&(i, n)) => (Some(i), (f, Some(i), n)),
            None => (None, (f, None, 0)),
        };
        for &(j, _) in &open {
            stmts[j].text.push(' ');
            stmts[j].text.push_str(line);
        }
        if let (Some(p), 0) = (parent, block.2) {
            stmts[p].first_block_len += 1;
        }
        let idx = stmts.len();
        if let Some(name) = line.strip_prefix("bool ").and_then(|r| r.split_whitespace().next()) {
            funcs[f].bools.push((idx, name.trim_end_matches(';').to_string()));
        }
        let compound = line.ends_with('{');
        stmts.push(Stmt {
            header: line.to_string(),
            text: line.to_string(),
            block,
            parent,
            func: f,
            compound,
            first_block_len: 0,
        });
        if compound {
            open.push((idx, 0));
        }
    }
    File { stmts, funcs }
}

/// Top-level calls of `header`: (name, argument texts).
fn calls(header: &str) -> Vec<(String, Vec<String>)> {
    let s = strip_strings(header);
    let bytes: Vec<char> = s.chars().collect();
    let re = Regex::new(r"\b([a-z_]\w*)\(").unwrap();
    let mut out = Vec::new();
    for c in re.captures_iter(&s) {
        let name = c[1].to_string();
        if name == "if" || name == "while" {
            continue;
        }
        let open = s[..c.get(0).unwrap().end()].chars().count();
        let (mut depth, mut args, mut cur) = (1, Vec::new(), String::new());
        for &ch in &bytes[open..] {
            match ch {
                '(' => depth += 1,
                ')' => {
                    depth -= 1;
                    if depth == 0 {
                        break;
                    }
                }
                ',' if depth == 1 => {
                    args.push(cur.trim().to_string());
                    cur.clear();
                    continue;
                }
                _ => {}
            }
            cur.push(ch);
        }
        if !cur.trim().is_empty() {
            args.push(cur.trim().to_string());
        }
        out.push((name, args));
    }
    out
}

fn bag(text: &str) -> BTreeMap<String, usize> {
    let re = Regex::new(r#""(?:[^"\\]|\\.)*"|\w+|&&|\|\||[<>=!]=|\S"#).unwrap();
    let mut m = BTreeMap::new();
    for t in re.find_iter(text) {
        *m.entry(t.as_str().to_string()).or_insert(0) += 1;
    }
    m
}

/// Numerator and denominator of the multiset Jaccard index.
fn jaccard_parts(a: &BTreeMap<String, usize>, b: &BTreeMap<String, usize>) -> (usize, usize) {
    let keys: BTreeSet<&String> = a.keys().chain(b.keys()).collect();
    let (mut lo, mut hi) = (0, 0);
    for k in keys {
        let (x, y) = (a.get(k).copied().unwrap_or(0), b.get(k).copied().unwrap_or(0));
        lo += x.min(y);
        hi += x.max(y);
    }
    (lo, hi)
}

fn ancestors(stmts: &[Stmt], mut i: usize) -> Vec<usize> {
    let mut out = Vec::new();
    while let Some(p) = stmts[i].parent {
        out.push(p);
        i = p;
    }
    out
}

fn related(stmts: &[Stmt], i: usize, j: usize) -> bool {
    i == j || ancestors(stmts, i).contains(&j) || ancestors(stmts, j).contains(&i)
}

/// Applicable-pair count per rule over every non-test `.ml` file of `root`.
pub fn applicable_counts(root: &Path) -> BTreeMap<u8, usize> {
    let mut files = Vec::new();
    for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
        let entry = entry.unwrap();
        let rel = entry.path().strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
        if rel.ends_with(".ml") && !rel.starts_with("tests/") {
            files.push(scan(&fs::read_to_string(entry.path()).unwrap()));
        }
    }
    let callables: Vec<(String, usize)> = files
        .iter()
        .flat_map(|f| f.funcs.iter().map(|g| (g.name.clone(), g.arity)))
        .filter(|(n, _)| !n.starts_with("test_"))
        .chain(BUILTINS.iter().map(|(n, a)| (n.to_string(), *a)))
        .collect();

    // A lone `=` is assignment, not an operator.
    let op = Regex::new(r"&&|\|\||==|!=|<=|>=|[<>+*/%!-]").unwrap();
    let int_lit = Regex::new(r"\b\d+\b").unwrap();
    let bool_lit = Regex::new(r"\b(true|false)\b").unwrap();
    let nonempty_str = Regex::new(r#""(?:[^"\\]|\\.)+""#).unwrap();
    let decl = Regex::new(r"^(int|bool|str) ").unwrap();
    let assign = Regex::new(r"^(\w+) = ").unwrap();

    let mut counts: BTreeMap<u8, usize> = (1..=16).map(|r| (r, 0)).collect();
    for file in &files {
        let st = &file.stmts;
        let bags: Vec<_> = st.iter().map(|s| bag(&s.text)).collect();
        for (i, s) in st.iter().enumerate() {
            let h = s.header.as_str();
            let bare = strip_strings(h);
            let func = &file.funcs[s.func];
            let bool_visible = |name: &str| func.bools.iter().any(|(at, n)| n == name && *at <= i);

            let mut app = [false; 17];
            app[1] = decl.is_match(h);
            app[2] = op.is_match(&bare);
            app[3] = int_lit.is_match(&bare) || bool_lit.is_match(&bare) || nonempty_str.is_match(h);
            app[4] = false;
            let cs = calls(h);
            app[5] = cs.iter().any(|(_, a)| a.len() >= 2 && a[0] != a[1]);
            app[6] = h.starts_with("if (")
                || h.starts_with("while (")
                || h.starts_with("bool ")
                || assign.captures(h).is_some_and(|c| bool_visible(&c[1]))
                || (h.starts_with("return ") && func.ret == "bool");
            app[7] = cs.iter().any(|(name, args)| {
                callables.iter().any(|(n, a)| n != name && *a == args.len())
                    && callables.iter().any(|(n, a)| n == name && *a == args.len())
            });
            app[8] = (1..=7).filter(|&r| app[r]).count() >= 2;
            app[9] = (0..st.len())
                .filter(|&j| !related(st, i, j) && st[j].text != s.text)
                .any(|j| {
                    let (lo, hi) = jaccard_parts(&bags[i], &bags[j]);
                    hi > 0 && 5 * lo >= 2 * hi
                });
            let siblings: Vec<usize> = (0..st.len()).filter(|&j| st[j].block == s.block).collect();
            let k = siblings.iter().position(|&j| j == i).unwrap();
            let other = if k + 1 < siblings.len() {
                Some(siblings[k + 1])
            } else if k > 0 {
                Some(siblings[k - 1])
            } else {
                None
            };
            app[10] = other.is_some_and(|j| st[j].text != s.text);
            app[11] = (0..st.len()).any(|j| !related(st, i, j));
            app[12] = true;
            app[13] = s.compound;
            app[14] = s.compound && s.first_block_len > 0;
            app[15] = s.compound && s.first_block_len > 0;
            app[16] = s.compound;
            for r in 1..=16u8 {
                if app[r as usize] {
                    *counts.get_mut(&r).unwrap() += 1;
                }
            }
        }
    }
    counts
}
