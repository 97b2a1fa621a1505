"""Allow running the package with: python -m discrete_de_rham"""

from discrete_de_rham.app import main

main()
