import os
from pathlib import Path

import pytest
from hypothesis import given, strategies as st

import synthfw
from vrfaudit import ingest


def make_tree(tmp_path: Path, parts=("system",), boot=False) -> Path:
    root = tmp_path / "fw"
    for part in parts:
        (root / part).mkdir(parents=True)
    if boot:
        (root / "boot.img").write_bytes(b"ANDROID!" + b"\x00" * 100)
    return root


class TestLoadFirmware:
    def test_minimal_system_only(self, tmp_path):
        root = make_tree(tmp_path)
        record = ingest.load_firmware(root, "quest", "v1")
        assert set(record.partition_roots) == {"system"}
        assert record.boot_image is None

    def test_full_layout(self, tmp_path):
        root = make_tree(tmp_path, parts=("system", "vendor", "odm"), boot=True)
        record = ingest.load_firmware(root, "quest2", "v2")
        assert set(record.partition_roots) == {"system", "vendor", "odm"}
        assert record.boot_image is not None

    def test_empty_dir_is_no_partitions(self, tmp_path):
        root = tmp_path / "empty"
        root.mkdir()
        with pytest.raises(ingest.NoPartitions):
            ingest.load_firmware(root, "quest", "v1")

    def test_missing_root_unreadable(self, tmp_path):
        with pytest.raises(ingest.UnreadableRoot):
            ingest.load_firmware(tmp_path / "nope", "quest", "v1")

    def test_manifest_override(self, tmp_path):
        root = tmp_path / "fw"
        (root / "parts" / "sys").mkdir(parents=True)
        root.joinpath("vrfaudit.manifest").write_text("system=parts/sys\n")
        record = ingest.load_firmware(root, "quest", "v1")
        assert record.partition_roots["system"] == (root / "parts" / "sys").resolve()

    def test_version_resolved_from_build_prop(self, tmp_path):
        root = make_tree(tmp_path)
        (root / "system" / "build.prop").write_text(synthfw.DEMO_BUILD_PROP)
        record = ingest.load_firmware(root, "quest3", "v57")
        assert (record.android_sdk, record.android_release) == (31, "12")

    def test_unresolvable_version_tolerated(self, tmp_path):
        root = make_tree(tmp_path)
        (root / "system" / "build.prop").write_text("ro.product.name=demo\n")
        record = ingest.load_firmware(root, "quest3", "v57")
        assert record.android_sdk is None


class TestBuildProp:
    def test_basic_pair(self):
        props = ingest.parse_build_prop_text("ro.build.id=SQ3A.220605.009.A1\n")
        assert props.entries == (("ro.build.id", "SQ3A.220605.009.A1"),)

    def test_comments_blanks_and_embedded_equals(self):
        props = ingest.parse_build_prop_text("# comment\n\nro.x=a=b\n")
        assert props.entries == (("ro.x", "a=b"),)

    def test_duplicate_key_last_wins(self):
        props = ingest.parse_build_prop_text("k=v1\nk=v2\n")
        assert props.get("k") == "v2"
        assert len(props.entries) == 2  # duplicates preserved in order

    def test_malformed_lines_counted(self):
        props = ingest.parse_build_prop_text("justtext\n=value\nok=1\n")
        assert props.skipped_lines == 2
        assert props.get("ok") == "1"

    @given(
        st.lists(
            st.tuples(
                st.text(
                    alphabet=st.characters(
                        whitelist_categories=("Ll", "Lu", "Nd"), whitelist_characters="._-"
                    ),
                    min_size=1,
                ),
                st.text(
                    alphabet=st.characters(blacklist_characters="\n\r", blacklist_categories=("Cs",)),
                ).map(str.strip),
            )
        )
    )
    def test_serialize_reparse_round_trip(self, entries):
        props = ingest.BuildProperties(tuple(entries))
        again = ingest.parse_build_prop_text(props.serialize())
        assert again.entries == props.entries


class TestResolveAndroidVersion:
    def test_pico_path(self):
        props = ingest.parse_build_prop_text(
            "ro.system.build.version.sdk=29\nro.system.build.version.release=10\n"
        )
        assert ingest.resolve_android_version(props, "pico4", {}) == (29, "10")

    def test_meta_fallback_when_unmapped(self):
        props = ingest.parse_build_prop_text(
            "ro.build.id=ZZZ99\nro.build.version.sdk=31\nro.build.version.release=12\n"
        )
        assert ingest.resolve_android_version(props, "quest3", {}) == (31, "12")

    def test_meta_mapped_build_id(self):
        props = ingest.parse_build_prop_text("ro.build.id=SQ3A.220605.009.A1\n")
        mapping = {"S*": (31, "12")}
        assert ingest.resolve_android_version(props, "quest3", mapping) == (31, "12")

    def test_no_version_keys(self):
        props = ingest.parse_build_prop_text("ro.product.name=x\n")
        with pytest.raises(ingest.VersionUnresolved):
            ingest.resolve_android_version(props, "quest", {})
        with pytest.raises(ingest.VersionUnresolved):
            ingest.resolve_android_version(props, "pico4", {})

    def test_prefix_map_longest_wins(self):
        mapping = {"S*": (31, "12"), "SQ3A*": (32, "12L")}
        assert ingest.lookup_build_id("SQ3A.1", mapping) == (32, "12L")
        assert ingest.lookup_build_id("SP1A.1", mapping) == (31, "12")


class TestEnumerateTargets:
    def test_magic_byte_filter(self, tmp_path):
        root = make_tree(tmp_path)
        bin_dir = root / "system" / "bin"
        bin_dir.mkdir()
        (bin_dir / "toybox").write_bytes(synthfw.build_elf())
        (bin_dir / "script.sh").write_text("#!/system/bin/sh\necho hi\n")
        record = ingest.load_firmware(root, "quest", "v1")
        targets = ingest.enumerate_targets(record)
        assert [p.name for p in targets.elf_candidates] == ["toybox"]

    def test_apk_and_cil_locations(self, tmp_path):
        root = make_tree(tmp_path, parts=("system", "vendor"))
        apk_dir = root / "system" / "priv-app" / "Foo"
        apk_dir.mkdir(parents=True)
        (apk_dir / "Foo.apk").write_bytes(b"PK\x03\x04junk")
        selinux = root / "system" / "etc" / "selinux"
        selinux.mkdir(parents=True)
        (selinux / "plat_sepolicy.cil").write_text("(allow a b (file (read)))\n")
        record = ingest.load_firmware(root, "quest", "v1")
        targets = ingest.enumerate_targets(record)
        assert [p.name for p in targets.apk_candidates] == ["Foo.apk"]
        assert [p.name for p in targets.cil_candidates] == ["plat_sepolicy.cil"]

    def test_deterministic_and_sorted(self, demo_tree):
        record = ingest.load_firmware(demo_tree, "quest3", "v57")
        first = ingest.enumerate_targets(record)
        second = ingest.enumerate_targets(record)
        assert first == second
        as_strings = [str(p) for p in first.elf_candidates]
        assert as_strings == sorted(as_strings)

    def test_all_paths_inside_roots(self, demo_tree):
        record = ingest.load_firmware(demo_tree, "quest3", "v57")
        targets = ingest.enumerate_targets(record)
        roots = [r.resolve() for r in record.partition_roots.values()]
        for group in (targets.elf_candidates, targets.apk_candidates, targets.cil_candidates):
            for path in group:
                assert any(path.resolve().is_relative_to(r) for r in roots)

    def test_symlink_escape_excluded(self, tmp_path):
        outside = tmp_path / "outside"
        outside.mkdir()
        (outside / "evil").write_bytes(synthfw.build_elf())
        root = make_tree(tmp_path)
        bin_dir = root / "system" / "bin"
        bin_dir.mkdir()
        (bin_dir / "inside").write_bytes(synthfw.build_elf())
        os.symlink(outside / "evil", bin_dir / "link_out")
        record = ingest.load_firmware(root, "quest", "v1")
        targets = ingest.enumerate_targets(record)
        assert [p.name for p in targets.elf_candidates] == ["inside"]

    def test_symlink_dedup_by_resolved_path(self, tmp_path):
        root = make_tree(tmp_path)
        bin_dir = root / "system" / "bin"
        bin_dir.mkdir()
        (bin_dir / "real").write_bytes(synthfw.build_elf())
        os.symlink(bin_dir / "real", bin_dir / "alias")
        record = ingest.load_firmware(root, "quest", "v1")
        targets = ingest.enumerate_targets(record)
        assert len(targets.elf_candidates) == 1

    def test_apex_archives_collected(self, tmp_path):
        root = make_tree(tmp_path)
        apex_dir = root / "system" / "apex"
        apex_dir.mkdir()
        (apex_dir / "com.demo.runtime.apex").write_bytes(
            synthfw.build_zip({"lib64/libinner.so": synthfw.build_elf()})
        )
        (apex_dir / "loose_elf").write_bytes(synthfw.build_elf())
        record = ingest.load_firmware(root, "quest", "v1")
        targets = ingest.enumerate_targets(record)
        assert [p.name for p in targets.apex_archives] == ["com.demo.runtime.apex"]
        assert [p.name for p in targets.elf_candidates] == ["loose_elf"]
