import sys

from idqf.main import main


sys.exit(main())
