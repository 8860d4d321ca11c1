from vesselgan.cli import main

main()
