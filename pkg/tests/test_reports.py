import json

import pytest

from vrfaudit import reports


def mini_report(
    device="quest3",
    version="v1",
    date="2023-01-01",
    sdk=31,
    enabled=("kaslr",),
    no_canary=10,
    declared=None,
    neverallow_keys=(),
    kernel_series=(4, 19),
):
    mitigations = [
        {"id": mid, "status": "ENABLED"} for mid in enabled
    ] + [{"id": "heap_init", "status": "ABSENT"}]
    return {
        "schema_version": reports.SCHEMA_VERSION,
        "toolkit_version": "0.1.0",
        "produced_at": "2026-01-01T00:00:00+00:00",
        "firmware": {
            "device_model": device,
            "version_label": version,
            "release_date": date,
            "android_sdk": sdk,
            "android_release": "12",
            "partitions": ["system"],
        },
        "kernel": {
            "status": "ok",
            "version": {"major": kernel_series[0], "minor": kernel_series[1], "patch": 0, "banner": ""},
            "mitigations": mitigations,
            "enabled_count": len(enabled),
            "absent_count": 1,
            "lts": None,
        },
        "binaries": {
            "total": 20,
            "without": {"canary": no_canary, "cfi": 5, "fortify": 4, "nx": 1, "relro": 2},
            "unique_content": 20,
            "failed": [],
            "files": [],
            "embedded": {"total": 0, "without": {}, "failed": []},
        },
        "apps": {
            "total": 3,
            "failed": [],
            "flags": {"use_cleartext_traffic": 1, "allow_backup": 0, "debuggable": 0},
            "categories": {},
            "bucket_means": None,
            "others_detail": None,
            "framework_apks": [],
            "reports": [],
        },
        "permissions": {
            "declared": declared or {"P": 0},
            "residual": [],
            "phantom": [],
            "residual_count": 0,
            "phantom_count": 0,
            "conflicts": [],
        },
        "sepolicy": {
            "status": "ok",
            "allow_count": 5,
            "neverallow_count": len(neverallow_keys),
            "rule_keys": list(neverallow_keys),
            "exposure": [],
            "skipped_forms": 0,
        },
    }


class TestStorage:
    def test_store_and_reload(self, tmp_path):
        report = mini_report()
        path = reports.store_report(report, tmp_path)
        assert path.exists()
        loaded, ordered_by = reports.load_reports(tmp_path, "quest3")
        assert len(loaded) == 1
        assert ordered_by == "date"
        assert reports.report_digest(loaded[0]) == reports.report_digest(report)

    def test_identical_restore_is_noop(self, tmp_path):
        report = mini_report()
        first = reports.store_report(report, tmp_path)
        before = first.read_bytes()
        again = dict(report, produced_at="2026-02-02T00:00:00+00:00")
        second = reports.store_report(again, tmp_path)
        assert second == first
        assert first.read_bytes() == before

    def test_version_collision(self, tmp_path):
        reports.store_report(mini_report(), tmp_path)
        changed = mini_report(no_canary=99)
        with pytest.raises(reports.VersionCollision):
            reports.store_report(changed, tmp_path)

    def test_index_written(self, tmp_path):
        reports.store_report(mini_report(), tmp_path)
        index = json.loads((tmp_path / "index.json").read_text())
        assert index["devices"]["quest3"]["v1"]["date"] == "2023-01-01"

    def test_canonical_bytes_sorted_compact(self):
        blob = reports.canonical_bytes({"b": 1, "a": [2, 1]})
        assert blob == b'{"a":[2,1],"b":1}'

    def test_digest_excludes_timestamp(self):
        one = mini_report()
        two = dict(mini_report(), produced_at="2030-12-31T23:59:59+00:00")
        assert reports.report_digest(one) == reports.report_digest(two)


class TestTrends:
    def test_series_extraction(self, tmp_path):
        for i, enabled in enumerate((("kaslr",), ("kaslr",), ("kaslr", "kpti", "vmap_stack"))):
            reports.store_report(
                mini_report(version=f"v{i}", date=f"2023-0{i + 1}-01", enabled=enabled),
                tmp_path,
            )
        series = reports.compute_trends(tmp_path, "quest3", ["kernel.mitigations_enabled"])[0]
        assert [p.value for p in series.points] == [1, 1, 3]
        assert series.ordered_by == "date"

    def test_unknown_metric(self, tmp_path):
        with pytest.raises(reports.UnknownMetric):
            reports.compute_trends(tmp_path, "quest3", ["bogus.metric"])

    def test_empty_catalog_empty_series(self, tmp_path):
        series = reports.compute_trends(tmp_path, "quest3", ["binaries.no_canary"])[0]
        assert series.points == ()

    def test_gap_point_for_missing_metric(self, tmp_path):
        broken = mini_report()
        del broken["sepolicy"]["allow_count"]
        reports.store_report(broken, tmp_path)
        series = reports.compute_trends(tmp_path, "quest3", ["sepolicy.allow_count"])[0]
        assert [p.value for p in series.points] == [None]

    def test_version_fallback_ordering_flagged(self, tmp_path):
        reports.store_report(mini_report(version="v10", date=None), tmp_path)
        reports.store_report(mini_report(version="v9", date=None), tmp_path)
        loaded, ordered_by = reports.load_reports(tmp_path, "quest3")
        assert ordered_by == "version_fallback"
        assert [r["firmware"]["version_label"] for r in loaded] == ["v9", "v10"]


class TestEvents:
    def test_mitigation_added_and_removed(self):
        old = mini_report(version="v1", enabled=("kaslr",))
        new = mini_report(version="v2", enabled=("kaslr", "kpti"))
        events = reports.events_between(old, new)
        kinds = [e.kind for e in events]
        assert reports.EventKind.MITIGATION_ADDED in kinds
        back = reports.events_between(new, old)
        assert reports.EventKind.MITIGATION_REMOVED in [e.kind for e in back]

    def test_android_version_bump(self):
        events = reports.events_between(
            mini_report(version="v1", sdk=29), mini_report(version="v2", sdk=31)
        )
        bump = [e for e in events if e.kind is reports.EventKind.ANDROID_VERSION_BUMP]
        assert bump and bump[0].payload == {"from_sdk": 29, "to_sdk": 31}

    def test_kernel_series_change(self):
        events = reports.events_between(
            mini_report(version="v1", kernel_series=(4, 19)),
            mini_report(version="v2", kernel_series=(5, 10)),
        )
        assert any(e.kind is reports.EventKind.KERNEL_SERIES_CHANGE for e in events)

    def test_flag_count_jump(self):
        events = reports.events_between(
            mini_report(version="v1", no_canary=100),
            mini_report(version="v2", no_canary=140),
        )
        jumps = [e for e in events if e.kind is reports.EventKind.FLAG_COUNT_JUMP]
        assert jumps and jumps[0].payload["metric"] == "binaries.no_canary"

    def test_no_jump_below_threshold(self):
        events = reports.events_between(
            mini_report(version="v1", no_canary=100),
            mini_report(version="v2", no_canary=110),
        )
        assert not any(e.kind is reports.EventKind.FLAG_COUNT_JUMP for e in events)

    def test_protection_change_delegation(self):
        events = reports.events_between(
            mini_report(version="v1", declared={"P": 0}),
            mini_report(version="v2", declared={"P": 2}),
        )
        changes = [e for e in events if e.kind is reports.EventKind.PROTECTION_CHANGE]
        assert changes and changes[0].payload["direction"] == "TIGHTENED"

    def test_neverallow_removed_delegation(self):
        key = "(neverallow untrusted_app net_dns_prop (file (read)))"
        events = reports.events_between(
            mini_report(version="v1", neverallow_keys=(key,)),
            mini_report(version="v2"),
        )
        removed = [e for e in events if e.kind is reports.EventKind.NEVERALLOW_REMOVED]
        assert removed and removed[0].payload["rule"] == key

    def test_identical_reports_no_events(self):
        report = mini_report()
        assert reports.events_between(report, report) == []

    def test_history_is_pairwise_concatenation(self, tmp_path):
        for i, enabled in enumerate((("kaslr",), ("kaslr", "kpti"), ("kpti",))):
            reports.store_report(
                mini_report(version=f"v{i}", date=f"2023-0{i + 1}-01", enabled=enabled),
                tmp_path,
            )
        history = reports.detect_change_events(tmp_path, "quest3")
        loaded, _ = reports.load_reports(tmp_path, "quest3")
        pairwise = reports.events_between(loaded[0], loaded[1]) + reports.events_between(
            loaded[1], loaded[2]
        )
        assert history == pairwise


class TestExports:
    def test_csv_columns_and_quoting(self):
        series = [
            reports.TrendSeries(
                metric="binaries.no_canary",
                device="quest3",
                points=(
                    reports.TrendPoint("v1", "2023-01-01", 10),
                    reports.TrendPoint('v"2', None, None),
                ),
            )
        ]
        data = reports.export_series_csv(series).decode()
        lines = data.strip().split("\r\n")
        assert lines[0] == "metric,device,version,date,value"
        assert lines[1] == "binaries.no_canary,quest3,v1,2023-01-01,10"
        assert lines[2] == 'binaries.no_canary,quest3,"v""2",,'

    def test_csv_header_only_for_empty(self):
        data = reports.export_series_csv([]).decode()
        assert data.strip() == "metric,device,version,date,value"

    def test_json_round_trip(self):
        series = [
            reports.TrendSeries(
                metric="apps.total",
                device="pico4",
                points=(reports.TrendPoint("v1", "2022-10-01", 176),),
                ordered_by="date",
            )
        ]
        assert reports.import_series_json(reports.export_series_json(series)) == series

    def test_events_exports(self):
        events = [
            reports.ChangeEvent(
                reports.EventKind.MITIGATION_ADDED, "v1", "v2", {"id": "kaslr"}
            )
        ]
        payload = json.loads(reports.export_events_json(events, "quest3"))
        assert payload["events"][0]["kind"] == "MITIGATION_ADDED"
        csv_lines = reports.export_events_csv(events, "quest3").decode().strip().split("\r\n")
        assert csv_lines[0] == "kind,device,from_version,to_version,detail"
        assert csv_lines[1].startswith("MITIGATION_ADDED,quest3,v1,v2,")
