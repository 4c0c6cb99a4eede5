use regex::Regex;

use crate::model::{ModelError, RangeRef, Workbook};

use super::{finish, located, Anchor, Finding, Located, RuleConfig};

/// R010-R013 over the defined-name table.
pub fn check_named_ranges(wb: &Workbook, config: &RuleConfig) -> Vec<Finding> {
    finish(named_range_items(wb, config), config, 1)
}

pub(crate) fn named_range_items(wb: &Workbook, config: &RuleConfig) -> Vec<Located> {
    let pattern = Regex::new(&config.name_pattern).ok();
    let names = wb.names();
    let mut out = Vec::new();
    let resolved: Vec<Option<RangeRef>> = names.iter().map(|n| wb.resolve_name(&n.name).ok()).collect();

    for (i, def) in names.iter().enumerate() {
        let anchor = Anchor::Name(i);
        if let Some(re) = &pattern {
            if !re.is_match(&def.name) {
                out.push(located(
                    anchor,
                    "R013",
                    vec![def.name.clone()],
                    format!("name `{}` does not match the pattern {}", def.name, config.name_pattern),
                ));
            }
        }
        match (&resolved[i], wb.resolve_name(&def.name)) {
            (Some(target), _) => {
                let sheet = wb.sheet(target.sheet().unwrap_or_default()).expect("resolved sheet exists");
                if sheet.cells_in(target).next().is_none() {
                    out.push(located(
                        anchor,
                        "R011",
                        vec![def.name.clone(), target.to_string()],
                        format!("name `{}` covers {target}, which is entirely blank", def.name),
                    ));
                }
            }
            (None, Err(ModelError::DanglingName { target, .. })) => out.push(located(
                anchor,
                "R012",
                vec![def.name.clone()],
                format!("name `{}` points at `{target}`, which does not exist", def.name),
            )),
            (None, _) => {}
        }
        for (j, other) in names.iter().enumerate().skip(i + 1) {
            let (Some(a), Some(b)) = (&resolved[i], &resolved[j]) else { continue };
            if a.sheet() != b.sheet() {
                continue;
            }
            if let Some(common) = a.intersect(b) {
                out.push(located(
                    anchor,
                    "R010",
                    vec![common.to_string(), def.name.clone(), other.name.clone()],
                    format!("names `{}` and `{}` overlap on {common}", def.name, other.name),
                ));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::workbook_from_json;

    fn run(names: &str, cells: &str) -> Vec<Finding> {
        let wb = workbook_from_json(&format!(
            r#"{{"names":[{names}],"sheets":[{{"name":"S","cells":{{{cells}}}}}]}}"#
        ))
        .unwrap();
        check_named_ranges(&wb, &RuleConfig::default())
    }

    #[test]
    fn overlapping() {
        let f = run(
            r#"{"name":"Rev","ref":"S!A1:A5"},{"name":"Costs","ref":"S!A4:A8"}"#,
            r#""A1":{"v":1},"A8":{"v":1}"#,
        );
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].rule, "R010");
        assert_eq!(f[0].loc, vec!["S!A4:A5", "Rev", "Costs"]);
    }

    #[test]
    fn empty_dangling_and_convention() {
        let f = run(
            r#"{"name":"Buffer","ref":"S!C1:C10"},{"name":"OldRate","ref":"Old!B2"},{"name":"tmp_x","ref":"S!A1"}"#,
            r#""A1":{"v":1}"#,
        );
        let rules: Vec<_> = f.iter().map(|f| (f.rule.as_str(), f.loc[0].as_str())).collect();
        assert_eq!(rules, vec![("R011", "Buffer"), ("R012", "OldRate"), ("R013", "tmp_x")]);
        assert_eq!(f.iter().map(|f| f.id).collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[test]
    fn disjoint_names_are_clean() {
        let f = run(
            r#"{"name":"Rev","ref":"S!A1:A3"},{"name":"Costs","ref":"S!B1:B3"}"#,
            r#""A1":{"v":1},"B1":{"v":1}"#,
        );
        assert!(f.is_empty(), "{f:?}");
    }
}
