"""``catalog`` and ``check-cartan``: exact certificates for Cartan data."""

import logging
from pathlib import Path
from typing import List, Optional

from csh_vortex.app.errors import CartanValidationError
from csh_vortex.app.schemas.config import RunConfig
from csh_vortex.app.schemas.reports import CartanCertificate, CatalogReport
from csh_vortex.app.services import lie_cartan as svc
from csh_vortex.app.storage.writer import write_report

logger = logging.getLogger(__name__)


def _certificate(spec: svc.AlgebraSpec) -> CartanCertificate:
    return svc.validate(svc.build_cartan_data(spec))


def run_catalog(config: RunConfig, out_dir: Path, types: Optional[List[str]] = None) -> int:
    labels = types or config.catalog.types
    specs = [svc.AlgebraSpec.parse(label) for label in labels] if labels else svc.catalog_specs()
    certificates = [_certificate(spec) for spec in specs]
    passed = sum(1 for c in certificates if c.passed)
    report = CatalogReport(
        certificates=certificates, passed=passed, failed=len(certificates) - passed, config=config.dump()
    )
    write_report(report, out_dir, "catalog")
    for cert in certificates:
        print(f"{cert.label}: {'pass' if cert.passed else 'FAIL'}")
    logger.info(f"catalog: {passed}/{len(certificates)} certificates pass")
    if report.failed:
        raise CartanValidationError(f"{report.failed} catalog certificates fail")
    return 0


def run_check_cartan(config: RunConfig, out_dir: Path) -> int:
    certificate = _certificate(config.algebra.to_spec()).model_copy(update={"config": config.dump()})
    write_report(certificate, out_dir, "check-cartan")
    print(certificate.model_dump_json(indent=2))
    if not certificate.passed:
        failed = ", ".join(c.name for c in certificate.checks if not c.passed)
        raise CartanValidationError(f"{certificate.label} fails: {failed}")
    return 0
