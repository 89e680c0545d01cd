import subprocess
import sys


def run(*args):
    result = subprocess.run(["./task", *args], capture_output=True, text=True, timeout=10)
    return result.stdout.rstrip("\n")


CASES = [
    (['https://example.com/api/user', 'aBc123'], 'https://example.com/api/user/aBc123'),
    (['https://example.com/api/user', ''], 'NULL'),
    (['https://example.com/api/user', 'user-42'], 'https://example.com/api/user/user-42'),
]


def main():
    failed = 0
    for args, expected in CASES:
        actual = run(*args)
        if actual != expected:
            print(f"FAIL: get_url_for_query({', '.join(map(repr, args))}) returned {actual!r}, expected {expected!r}")
            failed += 1
    if failed:
        sys.exit(1)
    print("all tests passed")
    sys.exit(0)


if __name__ == "__main__":
    main()
