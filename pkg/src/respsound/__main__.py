from respsound.cli import main

main()
