from bounded_quotient.main import main


if __name__ == "__main__":
    raise SystemExit(main())
