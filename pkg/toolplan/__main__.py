from toolplan.cli import main

raise SystemExit(main())
