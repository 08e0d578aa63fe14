"""
System Check for the Poisson Process Approximation Toolkit
Runs the invariant suites and a CLI smoke matrix, printing a coloured summary
"""

import contextlib
import io
import json
import os
import sys
import tempfile

# Color codes for terminal
class Colors:
    GREEN = '\033[92m'
    RED = '\033[91m'
    YELLOW = '\033[93m'
    BLUE = '\033[94m'
    RESET = '\033[0m'
    BOLD = '\033[1m'

def print_header(text):
    print(f"\n{Colors.BOLD}{Colors.BLUE}{'='*70}{Colors.RESET}")
    print(f"{Colors.BOLD}{Colors.BLUE}{text.center(70)}{Colors.RESET}")
    print(f"{Colors.BOLD}{Colors.BLUE}{'='*70}{Colors.RESET}\n")

def print_test(test_name, status, message=""):
    status_symbol = f"{Colors.GREEN}✅ PASS{Colors.RESET}" if status else f"{Colors.RED}❌ FAIL{Colors.RESET}"
    print(f"{test_name:.<50} {status_symbol}")
    if message:
        print(f"  {Colors.YELLOW}→ {message}{Colors.RESET}")

def test_dependencies():
    """Test 1: Required Packages"""
    print_header("TEST 1: DEPENDENCIES")

    tests_passed = 0
    packages = ["numpy", "scipy", "pandas", "dotenv", "tqdm"]
    for name in packages:
        try:
            __import__(name)
            print_test(f"import {name}", True)
            tests_passed += 1
        except ImportError as e:
            print_test(f"import {name}", False, str(e))
    return tests_passed, len(packages)

def test_environment():
    """Test 2: Environment Settings"""
    print_header("TEST 2: ENVIRONMENT SETTINGS")

    from config import load_settings
    from errors import ApproximationError

    try:
        settings = load_settings()
        print_test("PPA_* variables parse", True, f"seed={settings.seed}, samples={settings.samples}")
        return 1, 1
    except ApproximationError as e:
        print_test("PPA_* variables parse", False, str(e))
        return 0, 1

def test_selftest():
    """Test 3: Invariant Suites"""
    print_header("TEST 3: INVARIANT SUITES")

    from harness import selftest, selftest_json

    summary = selftest()
    tests_passed = 0
    for name, suite in summary["suites"].items():
        message = "; ".join(suite["failures"][:3])
        print_test(f"{name} ({suite['checks']} checks)", suite["passed"], message)
        tests_passed += int(suite["passed"])
    total_tests = len(summary["suites"])

    total_tests += 1
    again = selftest()
    same = selftest_json(again) == selftest_json(summary)
    print_test("Repeated run is byte-identical", same)
    tests_passed += int(same)
    return tests_passed, total_tests

def _run_cli(argv):
    from cli import main

    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = main(argv)
    return code, out.getvalue() + err.getvalue()

def test_cli():
    """Test 4: CLI Exit Codes"""
    print_header("TEST 4: CLI SMOKE MATRIX")

    tests_passed = 0
    with tempfile.TemporaryDirectory() as tmp:
        a, b = os.path.join(tmp, "a.json"), os.path.join(tmp, "b.json")
        with open(a, "w") as fh:
            json.dump([0.2, 0.8], fh)
        with open(b, "w") as fh:
            json.dump([0.3, 0.7], fh)

        matrix = [
            ("reproduce conditioning-gap", ["reproduce", "conditioning-gap", "--out", tmp], 0, "0.0095"),
            ("reproduce relation-flip", ["reproduce", "relation-flip", "--out", tmp], 0, "0.0002"),
            ("reproduce remark-3.7", ["reproduce", "remark-3.7", "--out", tmp], 0, "0.0095"),
            ("reproduce counterexample-4.7", ["reproduce", "counterexample-4.7", "--out", tmp], 0, "0.0002"),
            ("metrics rho1dd", ["metrics", "rho1dd", "--a", a, "--b", b], 0, "0.2"),
            ("experiment matern (small)", ["experiment", "matern", "--samples", "20", "--replicates", "3",
                                           "--seed", "7", "--out", tmp], 0, "verdict"),
            ("selftest with injected fault", ["selftest", "--suite", "reproductions",
                                              "--fault", "reproductions"], 1, "reproductions"),
            ("unknown flag", ["experiment", "matern", "--bogus"], 2, ""),
            ("negative radius", ["experiment", "matern", "--r", "-1", "--out", tmp], 2, "r=-1"),
            ("too few replicates", ["experiment", "occupancy", "--replicates", "2"], 2, "replicates"),
        ]
        for label, argv, expected, needle in matrix:
            try:
                code, text = _run_cli(argv)
            except Exception as e:
                print_test(label, False, f"raised {e!r}")
                continue
            ok = code == expected and needle in text
            print_test(label, ok, "" if ok else f"exit {code}, expected {expected}")
            tests_passed += int(ok)
    return tests_passed, len(matrix)

def run_all_tests():
    print(f"\n{Colors.BOLD}Poisson process approximation: system check{Colors.RESET}")

    all_results = []
    for name, test in (("Dependencies", test_dependencies), ("Environment", test_environment),
                       ("Invariant suites", test_selftest), ("CLI", test_cli)):
        passed, total = test()
        all_results.append((name, passed, total))

    print_header("SUMMARY")
    total_passed = sum(r[1] for r in all_results)
    total_tests = sum(r[2] for r in all_results)
    for name, passed, total in all_results:
        status_color = Colors.GREEN if passed == total else Colors.RED
        print(f"{name:.<40} {status_color}{passed}/{total}{Colors.RESET}")

    print(f"\n{Colors.BOLD}{'─'*70}{Colors.RESET}")
    overall_color = Colors.GREEN if total_passed == total_tests else Colors.RED
    print(f"{Colors.BOLD}OVERALL:{Colors.RESET} {overall_color}{total_passed}/{total_tests} checks passed{Colors.RESET}")
    if total_passed == total_tests:
        print(f"{Colors.GREEN}✅ All invariants hold{Colors.RESET}")
    else:
        print(f"{Colors.RED}❌ Review the failed checks above{Colors.RESET}")
    print(f"\n{Colors.BLUE}{'='*70}{Colors.RESET}\n")
    return total_passed == total_tests

if __name__ == "__main__":
    from config import configure_logging

    configure_logging("WARNING")
    try:
        success = run_all_tests()
        sys.exit(0 if success else 1)
    except KeyboardInterrupt:
        print(f"\n\n{Colors.YELLOW}Test interrupted by user{Colors.RESET}\n")
        sys.exit(1)
