import pytest
from hypothesis import given, strategies as st

from vrfaudit import permissions
from vrfaudit.apk import (
    AppCategory,
    DeclaredPermission,
    ManifestReport,
    ProtectionBucket,
    SecurityFlags,
    bucket_for_raw,
)


def report(package, used=(), declared=(), launcher=False):
    return ManifestReport(
        package_name=package,
        flags=SecurityFlags(),
        used_permissions=frozenset(used),
        declared_permissions=tuple(
            DeclaredPermission(name, raw, bucket_for_raw(raw)) for name, raw in declared
        ),
        has_launcher_activity=launcher,
        category=AppCategory.VENDOR_SPECIFIC,
        source_path=f"{package}.apk",
    )


class TestBuildLedger:
    def test_framework_declaration_and_usage(self):
        framework = report("android", declared=(("P", 0),))
        app = report("com.a", used=("P",))
        ledger = permissions.build_ledger([framework], [app])
        assert ledger.declared["P"].bucket is ProtectionBucket.NORMAL
        assert ledger.declared["P"].source == "framework"
        assert ledger.used_by["P"] == frozenset({"com.a"})

    def test_custom_unused_declaration(self):
        app = report("com.a", declared=(("Q", 1),))
        ledger = permissions.build_ledger([], [app])
        report_out = permissions.detect_inconsistencies(ledger)
        assert "Q" in report_out.residual

    def test_framework_wins_conflict(self):
        framework = report("android", declared=(("P", 0),))
        app = report("com.a", declared=(("P", 2),))
        ledger = permissions.build_ledger([framework], [app])
        assert ledger.declared["P"].raw == 0
        assert len(ledger.conflicts) == 1
        assert ledger.conflicts[0].dropped_raw == 2

    def test_equal_redeclaration_not_a_conflict(self):
        framework = report("android", declared=(("P", 0),))
        app = report("com.a", declared=(("P", 0),))
        ledger = permissions.build_ledger([framework], [app])
        assert ledger.conflicts == ()


class TestInconsistencies:
    def test_residual_and_phantom(self):
        ledger = permissions.build_ledger(
            [report("android", declared=(("A", 0), ("B", 0)))],
            [report("com.a", used=("A", "C"))],
        )
        result = permissions.detect_inconsistencies(ledger)
        assert result.residual == frozenset({"B"})
        assert result.phantom == frozenset({"C"})

    def test_allowlist_suppression(self):
        ledger = permissions.build_ledger([], [report("com.a", used=("X", "Y"))])
        result = permissions.detect_inconsistencies(ledger, frozenset({"X"}))
        assert result.phantom == frozenset({"Y"})

    def test_phantom_evidence_linkage(self):
        app_reports = [report("com.a", used=("P1",)), report("com.b", used=("P2",))]
        ledger = permissions.build_ledger([], app_reports)
        result = permissions.detect_inconsistencies(ledger)
        for name in result.phantom:
            assert any(name in r.used_permissions for r in app_reports)


class TestBucketMeans:
    def test_single_app_arithmetic(self):
        framework = report("android", declared=(("D1", 1), ("D2", 1), ("N1", 0)))
        app = report("com.a", used=("D1", "D2", "N1"))
        means = permissions.per_app_bucket_means([app], permissions.build_ledger([framework], [app]))
        assert means.means[ProtectionBucket.DANGEROUS] == 2.00
        assert means.means[ProtectionBucket.NORMAL] == 1.00
        assert means.means[ProtectionBucket.SIGNATURE] == 0
        assert means.means[ProtectionBucket.OTHERS] == 0

    def test_unresolved_goes_to_others(self):
        app = report("com.a", used=("GHOST",))
        means = permissions.per_app_bucket_means([app], permissions.build_ledger([], [app]))
        assert means.means[ProtectionBucket.OTHERS] == 1.00
        assert means.others_unresolved == 1
        assert means.others_declared == 0

    def test_partition_property(self):
        framework = report("android", declared=(("A", 0), ("B", 1), ("C", 0x400)))
        apps = [
            report("com.a", used=("A", "B", "C", "X")),
            report("com.b", used=("B",)),
        ]
        ledger = permissions.build_ledger([framework], apps)
        means = permissions.per_app_bucket_means(apps, ledger)
        total_used = sum(len(r.used_permissions) for r in apps)
        assert sum(means.totals.values()) == total_used

    def test_empty_app_set(self):
        with pytest.raises(permissions.EmptyAppSet):
            permissions.per_app_bucket_means([], permissions.build_ledger([], []))


class TestProtectionChanges:
    def test_normal_to_signature_tightened(self):
        events = permissions.protection_changes([("v1", {"P": 0}), ("v2", {"P": 2})])
        assert len(events) == 1
        assert events[0].direction is permissions.ChangeDirection.TIGHTENED

    def test_removed(self):
        events = permissions.protection_changes([("v1", {"Q": 1}), ("v2", {})])
        assert events[0].direction is permissions.ChangeDirection.REMOVED

    def test_preinstalled_flag_to_dangerous_loosened(self):
        # signature|preinstalled (0x402) relaxed to plain dangerous
        events = permissions.protection_changes([("v1", {"R": 0x402}), ("v2", {"R": 1})])
        assert events[0].direction is permissions.ChangeDirection.LOOSENED

    def test_flag_only_within_signature_pair(self):
        events = permissions.protection_changes([("v1", {"P": 2}), ("v2", {"P": 3})])
        assert events[0].direction is permissions.ChangeDirection.FLAG_ONLY

    def test_flag_bits_only(self):
        events = permissions.protection_changes([("v1", {"P": 2}), ("v2", {"P": 0x12})])
        assert events[0].direction is permissions.ChangeDirection.FLAG_ONLY

    def test_identical_ledgers_no_events(self):
        assert permissions.protection_changes([("v1", {"P": 0}), ("v2", {"P": 0})]) == []

    def test_concatenation_property(self):
        v1, v2, v3 = {"P": 0}, {"P": 2}, {}
        whole = permissions.protection_changes([("v1", v1), ("v2", v2), ("v3", v3)])
        pairwise = permissions.protection_changes(
            [("v1", v1), ("v2", v2)]
        ) + permissions.protection_changes([("v2", v2), ("v3", v3)])
        assert whole == pairwise


names = st.sets(st.text(min_size=1, max_size=12), max_size=20)


class TestSetAlgebraProperties:
    @given(declared=names, used=names)
    def test_laws(self, declared, used):
        ledger = permissions.build_ledger(
            [report("android", declared=tuple((n, 0) for n in declared))],
            [report("com.a", used=tuple(used))],
        )
        result = permissions.detect_inconsistencies(ledger)
        assert result.residual == frozenset(declared - used)
        assert result.phantom == frozenset(used - declared)
        assert not (result.residual & result.phantom)
        again = permissions.detect_inconsistencies(ledger)
        assert again == result
