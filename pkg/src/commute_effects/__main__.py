if __name__ == "__main__":
    from commute_effects.cli import main

    main()
