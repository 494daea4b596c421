"""pairdisc command line entry point."""
import sys
from typing import Optional, Sequence

from .pipeline import Pipeline


def main(argv: Optional[Sequence[str]] = None) -> int:
	"""Parse ``argv``, run the command and return its exit status."""
	pipeline = Pipeline()
	try:
		command = pipeline.parse_command_line(argv)
	except SystemExit as e:
		return int(e.code) if e.code is not None else 0
	return pipeline.run(command)


if __name__ == "__main__":
	sys.exit(main())
