import sys

# mock runs are one interpreter each: skip the numpy-heavy driver imports
if sys.argv[1:2] == ["mockplat"]:
    from .platform import mockplat_main

    sys.exit(mockplat_main(sys.argv[2:]))

from .cli import main

sys.exit(main())
