import re

import pytest


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    """Emit the acceptance FAIL lines (the PASS lines print from inside the
    tests themselves, so every criterion yields exactly one line)."""
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call" and rep.failed and "test_acceptance" in item.nodeid:
        m = re.search(r"criterion_(\d+)", item.name)
        if m:
            print(f"\nACCEPTANCE {int(m.group(1)):2d}: FAIL  {item.name}")
