import sys

from audita.main import main

sys.exit(main())
