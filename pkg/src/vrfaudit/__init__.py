"""vrfaudit: security audit toolkit for Android-based VR firmware trees.

Audits an extracted firmware version on four layers: kernel build
configuration, ELF binary hardening, preinstalled-app manifests and
permissions, and SELinux CIL policy.  Per-version results are stored as
canonical JSON reports that can be diffed and aggregated into
longitudinal trend series.
"""

__version__ = "0.1.0"

from .errors import AuditError

__all__ = ["AuditError", "__version__"]
