"""PASS/FAIL lines of the acceptance criteria, shown in the pytest summary."""
RESULTS = []


def record(number, passed, detail):
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)
    return line
