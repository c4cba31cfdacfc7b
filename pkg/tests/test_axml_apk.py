import struct
from pathlib import Path

import pytest

import synthfw
from vrfaudit import apk, axml


def parse_manifest(**traits):
    data = synthfw.build_manifest(traits.pop("package", "com.example.app"), **traits)
    return apk.extract_manifest_report(axml.parse_axml(data))


class TestAxmlParsing:
    def test_boolean_attribute_true(self):
        data = synthfw.build_manifest("com.x", flags={"debuggable": True})
        doc = axml.parse_axml(data)
        app = next(e for e in doc.iter_elements() if e.name == "application")
        attr = app.attr("debuggable", apk.RESID_DEBUGGABLE)
        assert attr.value is True
        assert attr.resource_id == apk.RESID_DEBUGGABLE

    def test_wrong_leading_chunk(self):
        with pytest.raises(axml.MalformedAxml):
            axml.parse_axml(struct.pack("<HHI", 0x0001, 8, 8))

    def test_unknown_trailing_chunk_skipped(self):
        plain = synthfw.build_manifest("com.x", flags={"debuggable": True})
        extended = synthfw.build_manifest(
            "com.x", flags={"debuggable": True}, unknown_chunk=True
        )
        report_plain = apk.extract_manifest_report(axml.parse_axml(plain))
        report_extended = apk.extract_manifest_report(axml.parse_axml(extended))
        assert report_plain == report_extended

    def test_truncated_chunk(self):
        data = synthfw.build_manifest("com.x")
        with pytest.raises(axml.MalformedAxml):
            axml.parse_axml(data[: len(data) // 2])

    def test_unbalanced_elements(self):
        data = synthfw.build_manifest("com.x")
        # drop the trailing end-namespace chunk and the manifest end-element
        truncated = data[: len(data) - 48]
        truncated = truncated[:4] + struct.pack("<I", len(truncated)) + truncated[8:]
        with pytest.raises(axml.MalformedAxml):
            axml.parse_axml(truncated)

    def test_utf16_pool_round_trip(self):
        data = synthfw.build_manifest(
            "com.example.ütf16", utf8=False, uses_permissions=("android.permission.CAMERA",)
        )
        report = apk.extract_manifest_report(axml.parse_axml(data))
        assert report.package_name == "com.example.ütf16"
        assert report.used_permissions == frozenset({"android.permission.CAMERA"})

    def test_long_string_two_byte_length(self):
        long_pkg = "com." + "x" * 200
        report = parse_manifest(package=long_pkg)
        assert report.package_name == long_pkg


class TestManifestReport:
    def test_flags_tristate_honesty(self):
        report = parse_manifest(flags={"debuggable": True, "use_cleartext_traffic": False})
        assert report.flags.debuggable is True
        assert report.flags.use_cleartext_traffic is False
        assert report.flags.allow_backup is None  # unset, never synthesized

    def test_protection_level_buckets(self):
        report = parse_manifest(
            declared_permissions=(
                ("p.normal", 0),
                ("p.dangerous", 1),
                ("p.signature", 2),
                ("p.sigorsys", 3),
                ("p.flagged", 0x12),
                ("p.other", 0x400),
            )
        )
        buckets = {p.name: p.bucket for p in report.declared_permissions}
        assert buckets["p.normal"] is apk.ProtectionBucket.NORMAL
        assert buckets["p.dangerous"] is apk.ProtectionBucket.DANGEROUS
        assert buckets["p.signature"] is apk.ProtectionBucket.SIGNATURE
        assert buckets["p.sigorsys"] is apk.ProtectionBucket.SIGNATURE_OR_SYSTEM
        assert buckets["p.flagged"] is apk.ProtectionBucket.SIGNATURE  # flag bits keep base
        assert buckets["p.other"] is apk.ProtectionBucket.OTHERS
        raws = {p.name: p.protection_level_raw for p in report.declared_permissions}
        assert raws["p.flagged"] == 0x12  # raw retained for change tracking

    def test_launcher_via_activity(self):
        report = parse_manifest(launcher=True)
        assert report.has_launcher_activity
        assert report.category is apk.AppCategory.USER_LAUNCHABLE

    def test_launcher_via_alias(self):
        report = parse_manifest(launcher=True, launcher_via_alias=True)
        assert report.has_launcher_activity

    def test_android_system_category_wins(self):
        report = parse_manifest(package="com.android.settings", launcher=True)
        assert report.category is apk.AppCategory.ANDROID_SYSTEM

    def test_vendor_specific_default(self):
        report = parse_manifest(package="com.oculus.shell")
        assert report.category is apk.AppCategory.VENDOR_SPECIFIC

    def test_category_partition(self):
        reports = [
            parse_manifest(package="com.android.a"),
            parse_manifest(package="com.oculus.b", launcher=True),
            parse_manifest(package="com.oculus.c"),
            parse_manifest(package="com.android.d", launcher=True),
        ]
        counts = {category: 0 for category in apk.AppCategory}
        for report in reports:
            counts[report.category] += 1
        assert sum(counts.values()) == len(reports)


class TestApkContainer:
    def test_open_apk(self, tmp_path):
        path = tmp_path / "a.apk"
        path.write_bytes(synthfw.build_apk(synthfw.build_manifest("com.x")))
        with apk.open_apk(path) as handle:
            assert handle.manifest_bytes()[:2] == b"\x03\x00"

    def test_no_manifest(self, tmp_path):
        path = tmp_path / "b.apk"
        path.write_bytes(synthfw.build_zip({"classes.dex": b"dex"}))
        with pytest.raises(apk.NoManifest):
            apk.open_apk(path)

    def test_not_a_zip(self, tmp_path):
        path = tmp_path / "c.apk"
        path.write_bytes(b"definitely not a zip")
        with pytest.raises(apk.NotAZip):
            apk.open_apk(path)

    def test_embedded_elf_enumeration(self, tmp_path):
        lib = synthfw.build_elf(dyn_symbols=("__stack_chk_fail",))
        path = tmp_path / "d.apk"
        path.write_bytes(
            synthfw.build_apk(
                synthfw.build_manifest("com.x"),
                libs={"lib/arm64-v8a/libnative.so": lib, "lib/arm64-v8a/notelf.txt": b"hi"},
            )
        )
        with apk.open_apk(path) as handle:
            found = dict(handle.iter_embedded_elf())
        assert list(found) == ["lib/arm64-v8a/libnative.so"]

    def test_apex_lib_trees(self, tmp_path):
        lib = synthfw.build_elf()
        path = tmp_path / "r.apex"
        path.write_bytes(
            synthfw.build_zip({"lib64/libinner.so": lib, "etc/config": b"x"})
        )
        with apk.open_apex(path) as handle:
            assert [name for name, _ in handle.iter_embedded_elf()] == ["lib64/libinner.so"]


class TestSummarizeFlags:
    def test_counts(self):
        reports = [
            parse_manifest(flags={"use_cleartext_traffic": True}),
            parse_manifest(flags={"use_cleartext_traffic": True, "allow_backup": True}),
            parse_manifest(flags={"debuggable": False}),
        ]
        counts = apk.summarize_flags(reports)
        assert counts.use_cleartext_traffic == 2
        assert counts.allow_backup == 1
        assert counts.debuggable == 0  # explicit false is not a set flag

    def test_empty(self):
        counts = apk.summarize_flags([])
        assert (counts.use_cleartext_traffic, counts.allow_backup, counts.debuggable) == (0, 0, 0)
