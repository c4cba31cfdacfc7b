import pytest

import synthfw
from vrfaudit import sepolicy


class TestParseCil:
    def test_allow_rule(self):
        ruleset = sepolicy.parse_cil_text("(allow appdomain system_file (file (read open)))")
        assert ruleset.allow_count == 1
        rule = ruleset.rules[0]
        assert rule.source == "appdomain"
        assert rule.target == "system_file"
        assert rule.class_perms == (("file", frozenset({"read", "open"})),)

    def test_neverallow_rule(self):
        ruleset = sepolicy.parse_cil_text(
            "(neverallow untrusted_app net_dns_prop (file (read)))"
        )
        assert ruleset.neverallow_count == 1

    def test_only_other_forms(self):
        ruleset = sepolicy.parse_cil_text("(typeattribute x)\n(type y)\n")
        assert ruleset.allow_count == 0
        assert sum(ruleset.parse_diagnostics.values()) > 0

    def test_nested_scopes(self):
        text = "(optional opt1 (block b (allow a b (c (p)))))"
        ruleset = sepolicy.parse_cil_text(text)
        assert ruleset.allow_count == 1

    def test_booleanif_both_branches_conditional(self):
        text = (
            "(booleanif flag (true (allow a b (c (p1)))) (false (allow a b (c (p2)))))"
        )
        ruleset = sepolicy.parse_cil_text(text)
        assert ruleset.allow_count == 2
        assert all(rule.conditional for rule in ruleset.rules)

    def test_named_classpermission_reference(self):
        ruleset = sepolicy.parse_cil_text("(allow a b named_cps)")
        assert ruleset.rules[0].class_perms == (("named_cps", frozenset()),)

    def test_self_target(self):
        ruleset = sepolicy.parse_cil_text("(allow a self (capability (sys_admin)))")
        assert ruleset.rules[0].target == "self"

    def test_comments_and_line_numbers(self):
        text = "; header comment\n(type x)\n(allow a b (c (p)))\n"
        ruleset = sepolicy.parse_cil_text(text, origin="demo.cil")
        assert ruleset.rules[0].origin_line == 3
        assert ruleset.rules[0].origin_file == "demo.cil"

    def test_unbalanced_open(self):
        with pytest.raises(sepolicy.UnbalancedParens) as exc:
            sepolicy.parse_cil_text("(allow a b (c (p))", origin="x.cil")
        assert "x.cil" in str(exc.value)

    def test_unbalanced_close(self):
        with pytest.raises(sepolicy.UnbalancedParens):
            sepolicy.parse_cil_text("(type t))")

    def test_parse_files_merges(self, tmp_path):
        one = tmp_path / "a.cil"
        one.write_text("(allow a b (c (p)))")
        two = tmp_path / "b.cil"
        two.write_text("(neverallow d e (f (g)))")
        ruleset = sepolicy.parse_cil([one, two])
        assert sepolicy.rule_counts(ruleset) == (1, 1)


class TestCountsAndDiff:
    def test_rule_counts(self):
        text = "(allow a b (c (p)))" * 3 + "(neverallow d e (f (g)))"
        assert sepolicy.rule_counts(sepolicy.parse_cil_text(text)) == (3, 1)

    def test_counts_additive_over_concatenation(self):
        part1 = "(allow a b (c (p)))\n(neverallow x y (z (q)))\n"
        part2 = "(allow d e (f (g)))\n"
        whole = sepolicy.parse_cil_text(part1 + part2)
        split1 = sepolicy.parse_cil_text(part1)
        split2 = sepolicy.parse_cil_text(part2)
        assert whole.allow_count == split1.allow_count + split2.allow_count
        assert whole.neverallow_count == split1.neverallow_count + split2.neverallow_count

    def test_diff_self_empty(self):
        ruleset = sepolicy.parse_cil_text(synthfw.DEMO_CIL)
        assert sepolicy.diff_rulesets(ruleset, ruleset).empty

    def test_removed_neverallow(self):
        old = sepolicy.parse_cil_text(
            "(neverallow untrusted_app net_dns_prop (file (read)))\n(allow a b (c (p)))"
        )
        new = sepolicy.parse_cil_text("(allow a b (c (p)))")
        diff = sepolicy.diff_rulesets(old, new)
        assert len(diff.removed_neverallow) == 1
        (key,) = diff.removed_neverallow
        assert "net_dns_prop" in key
        assert not diff.added_allow

    def test_added_allow(self):
        old = sepolicy.parse_cil_text("")
        new = sepolicy.parse_cil_text("(allow a b (c (p)))")
        diff = sepolicy.diff_rulesets(old, new)
        assert len(diff.added_allow) == 1

    def test_multiset_semantics(self):
        old = sepolicy.parse_cil_text("(allow a b (c (p)))\n(allow a b (c (p)))")
        new = sepolicy.parse_cil_text("(allow a b (c (p)))")
        diff = sepolicy.diff_rulesets(old, new)
        assert sum(diff.removed_allow.values()) == 1

    def test_diff_composition(self):
        a = sepolicy.parse_cil_text("(allow a b (c (p)))")
        b = sepolicy.parse_cil_text("(allow a b (c (p)))\n(allow d e (f (g)))")
        c = sepolicy.parse_cil_text("(allow d e (f (g)))")
        ab = sepolicy.diff_rulesets(a, b)
        bc = sepolicy.diff_rulesets(b, c)
        applied = (a.key_counter() + ab.added_allow - ab.removed_allow
                   + bc.added_allow - bc.removed_allow)
        assert applied == c.key_counter()


class TestRoundTrip:
    def test_serialize_reparse_stable(self):
        ruleset = sepolicy.parse_cil_text(synthfw.DEMO_CIL)
        text = sepolicy.serialize_rules(ruleset.rules)
        again = sepolicy.parse_cil_text(text)
        assert again.key_counter() == ruleset.key_counter()

    def test_cosmetic_perm_reordering_is_not_churn(self):
        one = sepolicy.parse_cil_text("(allow a b (file (read open)))")
        two = sepolicy.parse_cil_text("(allow a b (file (open read)))")
        assert sepolicy.diff_rulesets(one, two).empty


class TestExposure:
    def test_pvr_prop_finding(self):
        ruleset = sepolicy.parse_cil_text(
            "(allow untrusted_app vendor_android_pvr_prop (file (read)))"
        )
        findings = sepolicy.untrusted_domain_exposure(ruleset)
        assert len(findings) == 1
        assert findings[0].target == "vendor_android_pvr_prop"
        assert findings[0].reason == "property type"

    def test_hwservicemanager_prop_sensitive(self):
        ruleset = sepolicy.parse_cil_text(
            "(allow isolated_app hwservicemanager_prop (property_service (set)))"
        )
        findings = sepolicy.untrusted_domain_exposure(ruleset)
        assert findings and findings[0].reason in ("sensitive type", "property type")

    def test_source_filter(self):
        ruleset = sepolicy.parse_cil_text("(allow system_server some_prop (file (read)))")
        assert sepolicy.untrusted_domain_exposure(ruleset) == []

    def test_prefix_matches_numbered_domains(self):
        ruleset = sepolicy.parse_cil_text("(allow untrusted_app_27 foo_prop (file (read)))")
        assert len(sepolicy.untrusted_domain_exposure(ruleset)) == 1
