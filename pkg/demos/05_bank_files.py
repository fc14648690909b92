"""Writing and reading MMLF feature banks, and what a damaged file looks like."""

from mml import SyntheticSpec, generate_synthetic
from mml.bank_io import decode_bank, load_bank, write_bank
from mml.errors import BankFormatError

bank = generate_synthetic(SyntheticSpec(num_classes=6, per_class=5, shape=(4, 3, 3),
                                        split_counts=(3, 1, 2), seed=4))
bank.names = {0: "heron", 1: "kestrel"}
write_bank(bank, "demo.mmlf")  # also writes demo.mmlf.names.json

loaded = load_bank("demo.mmlf")
print("round trip exact:", loaded == bank, " names:", loaded.names)
print("splits:", [c.split.name for c in loaded.classes])

data = open("demo.mmlf", "rb").read()
for label, broken in [("bad magic", b"XMLF" + data[4:]), ("truncated", data[:-7])]:
    try:
        decode_bank(broken)
    except BankFormatError as exc:
        print(f"{label}: {type(exc).__name__}: {exc}")
