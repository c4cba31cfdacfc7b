"""Operator entry point: audit a firmware tree, diff reports, compute
trends, export series/events, and validate override data files."""

from __future__ import annotations

import argparse
import json
import os
import sys
from datetime import date
from pathlib import Path
from typing import Optional

from . import __version__, apk, elf, ingest, kernel, permissions, reports, sepolicy
from .errors import AuditError

CATALOG_ENV = "VRFAUDIT_CATALOG"

EXIT_OK = 0
EXIT_COMPONENT_FAILURES = 1
EXIT_FATAL = 2


def _diag(code: str, **detail) -> None:
    print(json.dumps({"diagnostic": code, **detail}, sort_keys=True), file=sys.stderr)


# ---------------------------------------------------------------------------
# audit pipeline


def _kernel_section(
    record: ingest.FirmwareRecord,
    targets: ingest.TargetSet,
    catalog,
    lts_table,
) -> tuple[dict, list[str]]:
    failures: list[str] = []
    section: dict = {
        "status": "ok",
        "version": None,
        "mitigations": None,
        "enabled_count": None,
        "absent_count": None,
        "lts": None,
    }
    if targets.kernel_blob is None:
        section["status"] = "missing_boot_image"
        failures.append("kernel: no boot image")
        return section, failures
    try:
        boot = kernel.parse_boot_image(Path(targets.kernel_blob).read_bytes())
    except (OSError, AuditError) as exc:
        section["status"] = f"boot_image_error: {exc}"
        failures.append(f"kernel: {exc}")
        return section, failures

    try:
        version = kernel.extract_kernel_version(boot.kernel_blob)
        section["version"] = {
            "major": version.major,
            "minor": version.minor,
            "patch": version.patch,
            "banner": version.banner,
        }
        lag = kernel.lts_lag(version, record.release_date, lts_table)
        section["lts"] = {
            "status": lag.status,
            "firmware_series": f"{lag.firmware_series[0]}.{lag.firmware_series[1]}",
            "latest_series": (
                f"{lag.latest_series[0]}.{lag.latest_series[1]}" if lag.latest_series else None
            ),
        }
    except kernel.BannerNotFound:
        failures.append("kernel: version banner not found")

    try:
        config = kernel.extract_ikconfig(boot.kernel_blob)
    except AuditError as exc:
        section["status"] = f"config_error: {exc}"
        failures.append(f"kernel: {exc}")
        return section, failures

    verdicts = kernel.evaluate_mitigations(config, record.android_sdk, catalog)
    section["mitigations"] = [
        {
            "id": v.entry_id,
            "status": v.status.value,
            "requirement": v.requirement.value,
            "requirement_for_version": v.requirement_for_version,
            "satisfied_clause": list(v.satisfied_clause),
            "clause_states": {opt: state for opt, state in v.clause_states},
        }
        for v in sorted(verdicts, key=lambda v: v.entry_id)
    ]
    section["enabled_count"] = sum(
        1 for v in verdicts if v.status is kernel.MitigationStatus.ENABLED
    )
    section["absent_count"] = len(verdicts) - section["enabled_count"]
    return section, failures


def _verdict_dict(v: elf.ElfHardeningVerdict) -> dict:
    return {
        "path": v.path,
        "canary": v.canary,
        "cfi": v.cfi,
        "fortify": v.fortify,
        "nx": v.nx,
        "relro": v.relro.value if v.relro is not None else None,
        "parse": v.parse_status.value,
        "sha256": v.sha256,
        "evidence": {check: sorted(items) for check, items in sorted(v.evidence.items())},
    }


def _binaries_section(
    targets: ingest.TargetSet, root: Path, jobs: Optional[int]
) -> tuple[dict, list[str]]:
    batch = elf.audit_binaries(targets.elf_candidates, root=root, jobs=jobs)

    embedded: list[elf.ElfHardeningVerdict] = []
    for container_path, opener in [
        *[(p, apk.open_apk) for p in targets.apk_candidates],
        *[(p, apk.open_apex) for p in targets.apex_archives],
    ]:
        try:
            rel = Path(container_path).resolve().relative_to(root.resolve()).as_posix()
        except ValueError:
            rel = Path(container_path).as_posix()
        try:
            with opener(container_path) as container:
                for member, data in container.iter_embedded_elf():
                    embedded.append(elf.hardening_verdict(f"{rel}!{member}", data))
        except AuditError:
            continue
    embedded.sort(key=lambda v: v.path)
    embedded_summary = elf.summarize_verdicts(embedded)

    failures = [f"elf: {v.path}" for v in batch.failures]
    section = {
        "total": batch.summary.total,
        "without": batch.summary.as_dict(),
        "unique_content": batch.summary.unique_content,
        "failed": sorted(v.path for v in batch.failures),
        "files": [_verdict_dict(v) for v in batch.verdicts],
        "embedded": {
            "total": embedded_summary.total,
            "without": embedded_summary.as_dict(),
            "failed": sorted(
                v.path for v in embedded if v.parse_status is elf.ParseStatus.FAILED
            ),
        },
    }
    return section, failures


def _apps_sections(
    targets: ingest.TargetSet,
    record: ingest.FirmwareRecord,
    root: Path,
    framework_names: tuple[str, ...],
    baseline_allowlist: frozenset[str],
) -> tuple[dict, dict, list[str]]:
    failures: list[str] = []
    app_reports: list[apk.ManifestReport] = []
    framework_reports: list[apk.ManifestReport] = []
    failed_paths: list[str] = []

    def rel_label(path: Path) -> str:
        try:
            return Path(path).resolve().relative_to(root.resolve()).as_posix()
        except ValueError:
            return Path(path).as_posix()

    framework_paths = []
    system_root = record.partition_roots.get("system")
    if system_root is not None:
        for name in framework_names:
            candidate = system_root / "framework" / name
            if candidate.is_file():
                framework_paths.append(candidate)

    for path in framework_paths:
        try:
            framework_reports.append(apk.report_for_apk(path, rel_label(path)))
        except AuditError as exc:
            failed_paths.append(rel_label(path))
            failures.append(f"apk: {rel_label(path)}: {exc}")

    for path in targets.apk_candidates:
        label = rel_label(path)
        try:
            report = apk.report_for_apk(path, label)
        except AuditError as exc:
            failed_paths.append(label)
            failures.append(f"apk: {label}: {exc}")
            continue
        if Path(path).name in framework_names:
            framework_reports.append(report)
        else:
            app_reports.append(report)

    app_reports.sort(key=lambda r: r.source_path or "")
    flags = apk.summarize_flags(app_reports)
    categories = {category.value: 0 for category in apk.AppCategory}
    for report in app_reports:
        categories[report.category.value] += 1

    ledger = permissions.build_ledger(framework_reports, app_reports)
    inconsistencies = permissions.detect_inconsistencies(ledger, baseline_allowlist)

    bucket_means = None
    others_detail = None
    if app_reports:
        means = permissions.per_app_bucket_means(app_reports, ledger)
        bucket_means = {bucket.value: value for bucket, value in means.means.items()}
        others_detail = {
            "unresolved_uses": means.others_unresolved,
            "declared_nonstandard": means.others_declared,
        }

    def flag_dict(flags_obj: apk.SecurityFlags) -> dict:
        return {
            "allow_backup": flags_obj.allow_backup,
            "debuggable": flags_obj.debuggable,
            "use_cleartext_traffic": flags_obj.use_cleartext_traffic,
        }

    apps_section = {
        "total": len(app_reports),
        "failed": sorted(failed_paths),
        "flags": {
            "use_cleartext_traffic": flags.use_cleartext_traffic,
            "allow_backup": flags.allow_backup,
            "debuggable": flags.debuggable,
        },
        "categories": categories,
        "bucket_means": bucket_means,
        "others_detail": others_detail,
        "framework_apks": sorted(r.source_path or "" for r in framework_reports),
        "reports": [
            {
                "path": r.source_path,
                "package": r.package_name,
                "category": r.category.value,
                "flags": flag_dict(r.flags),
                "has_launcher_activity": r.has_launcher_activity,
                "used_permissions": sorted(r.used_permissions),
                "declared_permissions": {
                    p.name: p.protection_level_raw for p in r.declared_permissions
                },
            }
            for r in app_reports
        ],
    }

    permissions_section = {
        "declared": ledger.raw_map(),
        "residual": sorted(inconsistencies.residual),
        "phantom": sorted(inconsistencies.phantom),
        "residual_count": len(inconsistencies.residual),
        "phantom_count": len(inconsistencies.phantom),
        "conflicts": [
            {
                "name": c.name,
                "kept_source": c.kept_source,
                "kept_raw": c.kept_raw,
                "dropped_source": c.dropped_source,
                "dropped_raw": c.dropped_raw,
            }
            for c in ledger.conflicts
        ],
    }
    return apps_section, permissions_section, failures


def _sepolicy_section(
    targets: ingest.TargetSet, baseline_cil: tuple[Path, ...]
) -> tuple[dict, list[str]]:
    failures: list[str] = []
    if not targets.cil_candidates:
        failures.append("sepolicy: no .cil files (binary-only policy skipped)")
        return {"status": "skipped_binary_policy"}, failures
    try:
        ruleset = sepolicy.parse_cil(targets.cil_candidates)
    except (OSError, AuditError) as exc:
        failures.append(f"sepolicy: {exc}")
        return {"status": f"parse_error: {exc}"}, failures
    findings = sepolicy.untrusted_domain_exposure(ruleset)
    section = {
        "status": "ok",
        "allow_count": ruleset.allow_count,
        "neverallow_count": ruleset.neverallow_count,
        "rule_keys": sorted(r.canonical_key() for r in ruleset.rules),
        "exposure": [
            {
                "source": f.source,
                "target": f.target,
                "reason": f.reason,
                "rule": f.rule_key,
            }
            for f in findings
        ],
        "skipped_forms": sum(ruleset.parse_diagnostics.values()),
    }
    if baseline_cil:
        baseline = sepolicy.parse_cil(baseline_cil)
        diff = sepolicy.diff_rulesets(baseline, ruleset)
        section["baseline_removed_neverallow"] = sorted(diff.removed_neverallow.elements())
    return section, failures


def audit_tree(
    root: Path,
    device: str,
    version: str,
    release_date: Optional[date] = None,
    mitigation_catalog: Optional[Path] = None,
    lts_table_path: Optional[Path] = None,
    buildid_map_path: Optional[Path] = None,
    framework_names: tuple[str, ...] = apk.DEFAULT_FRAMEWORK_APK_NAMES,
    baseline_cil: tuple[Path, ...] = (),
    baseline_allowlist: frozenset[str] = frozenset(),
    jobs: Optional[int] = None,
) -> tuple[dict, list[str]]:
    """Run the full four-layer audit over one firmware tree.

    Returns (report dict, component failure strings).  Fatal input
    problems raise; per-component problems are recorded and reported.
    """
    root = Path(root)
    buildid_map = kernel.load_buildid_map(buildid_map_path)
    catalog = kernel.load_mitigation_catalog(mitigation_catalog)
    lts_table = kernel.load_lts_table(lts_table_path)

    record = ingest.load_firmware(root, device, version, release_date, buildid_map)
    targets = ingest.enumerate_targets(record)

    failures: list[str] = []
    kernel_section, kernel_failures = _kernel_section(record, targets, catalog, lts_table)
    failures.extend(kernel_failures)
    binaries_section, binary_failures = _binaries_section(targets, root, jobs)
    failures.extend(binary_failures)
    apps_section, permissions_section, app_failures = _apps_sections(
        targets, record, root, framework_names, baseline_allowlist
    )
    failures.extend(app_failures)
    sepolicy_section, sepolicy_failures = _sepolicy_section(targets, baseline_cil)
    failures.extend(sepolicy_failures)

    firmware_section = {
        "device_model": record.device_model,
        "version_label": record.version_label,
        "release_date": record.release_date.isoformat() if record.release_date else None,
        "android_sdk": record.android_sdk,
        "android_release": record.android_release,
        "partitions": sorted(record.partition_roots),
    }
    report = reports.new_report(
        firmware=firmware_section,
        kernel=kernel_section,
        binaries=binaries_section,
        apps=apps_section,
        permissions=permissions_section,
        sepolicy=sepolicy_section,
    )
    return report, failures


def _print_summary(report: dict, report_file: Optional[Path]) -> None:
    firmware = report["firmware"]
    print(f"firmware: {firmware['device_model']} {firmware['version_label']}"
          f" (sdk {firmware['android_sdk']}, release {firmware['android_release']})")
    k = report["kernel"]
    if k.get("mitigations") is not None:
        version = k.get("version") or {}
        banner = (
            f"{version.get('major')}.{version.get('minor')}.{version.get('patch')}"
            if version
            else "unknown"
        )
        lts = k.get("lts") or {}
        print(
            f"RQ1 kernel {banner}: {k['enabled_count']}/{k['enabled_count'] + k['absent_count']}"
            f" mitigations enabled; LTS {lts.get('status', 'INDETERMINATE')}"
            + (f" (latest {lts['latest_series']})" if lts.get("latest_series") else "")
        )
    else:
        print(f"RQ1 kernel: {k['status']}")
    b = report["binaries"]
    w = b["without"]
    print(
        f"RQ2 binaries {b['total']}: without canary {w['canary']}, cfi {w['cfi']},"
        f" fortify {w['fortify']}, nx {w['nx']}, relro {w['relro']}"
        f" (embedded: {b['embedded']['total']})"
    )
    a = report["apps"]
    f = a["flags"]
    print(
        f"RQ3 apps {a['total']}: cleartext {f['use_cleartext_traffic']},"
        f" backup {f['allow_backup']}, debuggable {f['debuggable']}"
    )
    p = report["permissions"]
    print(f"RQ3 permissions: phantom {p['phantom_count']}, residual {p['residual_count']}")
    s = report["sepolicy"]
    if s.get("status") == "ok":
        print(
            f"RQ4 sepolicy: allow {s['allow_count']}, neverallow {s['neverallow_count']},"
            f" exposure findings {len(s['exposure'])}"
        )
    else:
        print(f"RQ4 sepolicy: {s['status']}")
    if report_file is not None:
        print(f"report: {report_file}")


def cmd_audit(args: argparse.Namespace) -> int:
    root = Path(args.root)
    if not root.exists():
        _diag("fatal", error="root_not_found", path=str(root))
        return EXIT_FATAL
    release = None
    if args.date:
        try:
            release = date.fromisoformat(args.date)
        except ValueError:
            _diag("fatal", error="bad_date", value=args.date)
            return EXIT_FATAL
    allowlist = frozenset()
    if args.permission_allowlist:
        allowlist = frozenset(
            line.strip()
            for line in Path(args.permission_allowlist).read_text(encoding="utf-8").splitlines()
            if line.strip() and not line.startswith("#")
        )
    try:
        report, failures = audit_tree(
            root,
            args.device,
            args.version,
            release_date=release,
            mitigation_catalog=args.mitigation_catalog,
            lts_table_path=args.lts_table,
            buildid_map_path=args.buildid_map,
            framework_names=tuple(args.framework_apks.split(","))
            if args.framework_apks
            else apk.DEFAULT_FRAMEWORK_APK_NAMES,
            baseline_cil=tuple(Path(p) for p in args.baseline_cil or ()),
            baseline_allowlist=allowlist,
            jobs=args.jobs,
        )
    except AuditError as exc:
        _diag("fatal", error=type(exc).__name__, detail=str(exc))
        return EXIT_FATAL

    stored: Optional[Path] = None
    if args.catalog:
        try:
            stored = reports.store_report(report, Path(args.catalog))
        except AuditError as exc:
            _diag("fatal", error=type(exc).__name__, detail=str(exc))
            return EXIT_FATAL
    if args.out:
        Path(args.out).write_bytes(reports.canonical_bytes(report))

    _print_summary(report, stored)
    if failures:
        for failure in failures:
            _diag("component_failure", detail=failure)
        return EXIT_COMPONENT_FAILURES
    return EXIT_OK


def cmd_diff(args: argparse.Namespace) -> int:
    try:
        old = json.loads(Path(args.old).read_text(encoding="utf-8"))
        new = json.loads(Path(args.new).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        _diag("fatal", error="unreadable_report", detail=str(exc))
        return EXIT_FATAL
    events = reports.events_between(old, new, jump_threshold=args.jump_threshold)
    if not events:
        print("no changes")
        return EXIT_OK
    regression = False
    for event in events:
        print(
            f"{event.kind.value} {event.from_version} -> {event.to_version}: "
            + json.dumps(event.payload, sort_keys=True)
        )
        if event.kind in reports.REGRESSION_KINDS:
            regression = True
        if (
            event.kind is reports.EventKind.PROTECTION_CHANGE
            and event.payload.get("direction") == "LOOSENED"
        ):
            regression = True
    if regression:
        _diag("regression", detail="loosened/removed protections between reports")
        return EXIT_COMPONENT_FAILURES
    return EXIT_OK


def _resolve_catalog(args: argparse.Namespace) -> Optional[Path]:
    catalog = args.catalog or os.environ.get(CATALOG_ENV)
    return Path(catalog) if catalog else None


def cmd_trend(args: argparse.Namespace) -> int:
    catalog = _resolve_catalog(args)
    if catalog is None:
        _diag("fatal", error="no_catalog_dir")
        return EXIT_FATAL
    metrics = args.metric or sorted(reports.METRICS)
    try:
        series = reports.compute_trends(catalog, args.device, metrics)
    except reports.UnknownMetric as exc:
        _diag("fatal", error="unknown_metric", metric=str(exc), valid=sorted(reports.METRICS))
        return EXIT_FATAL
    payload = (
        reports.export_series_csv(series)
        if args.format == "csv"
        else reports.export_series_json(series)
    )
    _emit(payload, args.out)
    return EXIT_OK


def cmd_export(args: argparse.Namespace) -> int:
    catalog = _resolve_catalog(args)
    if catalog is None:
        _diag("fatal", error="no_catalog_dir")
        return EXIT_FATAL
    if args.what == "trends":
        return cmd_trend(args)
    events = reports.detect_change_events(catalog, args.device)
    payload = (
        reports.export_events_csv(events, args.device)
        if args.format == "csv"
        else reports.export_events_json(events, args.device)
    )
    _emit(payload, args.out)
    return EXIT_OK


def _emit(payload: bytes, out: Optional[str]) -> None:
    if out:
        Path(out).write_bytes(payload)
    else:
        sys.stdout.write(payload.decode("utf-8"))


def cmd_catalog_check(args: argparse.Namespace) -> int:
    problems = []
    for label, loader, path in (
        ("mitigation_catalog", kernel.load_mitigation_catalog, args.mitigation_catalog),
        ("lts_table", kernel.load_lts_table, args.lts_table),
        ("buildid_map", kernel.load_buildid_map, args.buildid_map),
    ):
        try:
            loader(Path(path) if path else None)
            print(f"{label}: ok ({path or 'built-in'})")
        except (OSError, AuditError) as exc:
            problems.append((label, str(exc)))
            _diag("catalog_error", file=label, detail=str(exc))
    return EXIT_FATAL if problems else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vrfaudit",
        description="Audit Android-based VR firmware trees: kernel config, "
        "binary hardening, app manifests/permissions, SEPolicy.",
    )
    parser.add_argument("--version", action="version", version=f"vrfaudit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_audit = sub.add_parser("audit", help="audit one extracted firmware tree")
    p_audit.add_argument("root", help="extracted firmware directory")
    p_audit.add_argument("--device", required=True, help="device model label")
    p_audit.add_argument("--version", dest="version", required=True, help="firmware version label")
    p_audit.add_argument("--date", help="release date (ISO)")
    p_audit.add_argument("--catalog", default=os.environ.get(CATALOG_ENV),
                         help=f"report catalog dir (default ${CATALOG_ENV})")
    p_audit.add_argument("--mitigation-catalog", help="override mitigation catalog file")
    p_audit.add_argument("--lts-table", help="override LTS table file")
    p_audit.add_argument("--buildid-map", help="override build-id map file")
    p_audit.add_argument("--framework-apks", help="comma-separated framework APK names")
    p_audit.add_argument("--baseline-cil", nargs="*", help="baseline CIL files to diff against")
    p_audit.add_argument("--permission-allowlist",
                         help="file of baseline permission names excluded from phantom counts")
    p_audit.add_argument("--jobs", type=int, help="worker threads (default: CPU count)")
    p_audit.add_argument("--out", help="also write the report JSON here")
    p_audit.set_defaults(func=cmd_audit)

    p_diff = sub.add_parser("diff", help="compare two stored reports")
    p_diff.add_argument("old")
    p_diff.add_argument("new")
    p_diff.add_argument("--jump-threshold", type=float, default=0.25)
    p_diff.set_defaults(func=cmd_diff)

    p_trend = sub.add_parser("trend", help="metric series across a device's history")
    p_trend.add_argument("--device", required=True)
    p_trend.add_argument("--metric", action="append", help="metric id (repeatable)")
    p_trend.add_argument("--catalog")
    p_trend.add_argument("--format", choices=("csv", "json"), default="csv")
    p_trend.add_argument("--out")
    p_trend.set_defaults(func=cmd_trend)

    p_export = sub.add_parser("export", help="export trend series or change events")
    p_export.add_argument("--device", required=True)
    p_export.add_argument("--what", choices=("trends", "events"), default="trends")
    p_export.add_argument("--metric", action="append")
    p_export.add_argument("--catalog")
    p_export.add_argument("--format", choices=("csv", "json"), default="json")
    p_export.add_argument("--out")
    p_export.set_defaults(func=cmd_export)

    p_check = sub.add_parser("catalog-check", help="validate override data files")
    p_check.add_argument("--mitigation-catalog")
    p_check.add_argument("--lts-table")
    p_check.add_argument("--buildid-map")
    p_check.set_defaults(func=cmd_catalog_check)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
